#include "flextsf/diag.hpp"

namespace flextsf::diag {

Counters& counters() {
    static Counters c;
    return c;
}

void reset() { counters() = Counters{}; }

}  // namespace flextsf::diag
