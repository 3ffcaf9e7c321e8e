#include "flextsf/ivp_patcher.hpp"

#include <cmath>

#include "flextsf/diag.hpp"

namespace flextsf {

std::size_t Patch::observed_count() const {
    std::size_t n = 0;
    for (auto o : observed) n += (o != 0);
    return n;
}

std::vector<Patch> segment(const std::vector<double>& times,
                           const std::vector<double>& values,
                           const std::vector<std::uint8_t>& observed,
                           std::size_t p) {
    if (times.empty()) throw DataError("segment: empty sequence");
    if (p == 0) throw DataError("segment: patch length must be positive");
    std::vector<Patch> out;
    for (std::size_t start = 0; start < times.size(); start += p) {
        const std::size_t end = std::min(start + p, times.size());
        Patch patch;
        patch.times.assign(times.begin() + start, times.begin() + end);
        patch.values.assign(values.begin() + start, values.begin() + end);
        patch.observed.assign(observed.begin() + start, observed.begin() + end);
        patch.tau = patch.times.front();
        if (patch.observed_count() > 0) out.push_back(std::move(patch));
    }
    return out;
}

std::vector<Patch> segment(const NormalizedInstance& inst, std::size_t p) {
    return segment(inst.times_prime, inst.values_prime, inst.observed, p);
}

std::optional<IvpSolverKind> solver_kind_from_string(const std::string& s) {
    if (s == "resnet-flow") return IvpSolverKind::resnet_flow;
    if (s == "rk4-ode") return IvpSolverKind::rk4;
    return std::nullopt;
}

const char* solver_kind_name(IvpSolverKind k) {
    return k == IvpSolverKind::resnet_flow ? "resnet-flow" : "rk4-ode";
}

// ---------------------------------------------------------------------------
// IvpSolver

namespace {

Tensor init_weight(Shape shape, double scale, ParamStore& ps,
                   const std::string& name, RngState& rng) {
    std::vector<double> v(shape_numel(shape));
    for (double& x : v) x = rng.uniform(-scale, scale);
    return ps.add(name, Tensor::from_values(shape, std::move(v), true));
}

Tensor init_linear_w(std::size_t in, std::size_t out, ParamStore& ps,
                     const std::string& name, RngState& rng,
                     double gain = 1.0) {
    return init_weight({in, out}, gain / std::sqrt(double(in)), ps, name, rng);
}

Tensor init_zeros(Shape shape, ParamStore& ps, const std::string& name) {
    return ps.add(name, Tensor::zeros(shape, true));
}

Tensor const_col(const std::vector<double>& v) {
    return Tensor::from_values({v.size(), 1}, v);
}

}  // namespace

IvpSolver::IvpSolver(IvpSolverConfig cfg, ParamStore& params,
                     std::string prefix, RngState& init)
    : cfg_(cfg), params_(&params), prefix_(std::move(prefix)) {
    const std::size_t d = cfg_.latent_dim, h = cfg_.hidden_dim;
    if (cfg_.kind == IvpSolverKind::resnet_flow) {
        // small output scale keeps the update contractive at init, which the
        // fixed-point inverse relies on
        w_gate_ = init_weight({1, d}, 1.0, *params_, prefix_ + ".gate", init);
        w1_ = init_linear_w(d, h, *params_, prefix_ + ".w1", init);
        u1_ = init_weight({1, h}, 0.5, *params_, prefix_ + ".u1", init);
        b1_ = init_zeros({h}, *params_, prefix_ + ".b1");
        w2_ = init_linear_w(h, d, *params_, prefix_ + ".w2", init, 0.1);
        b2_ = init_zeros({d}, *params_, prefix_ + ".b2");
    } else {
        f_skip_ = init_linear_w(d, d, *params_, prefix_ + ".skip", init, 0.3);
        f_w1_ = init_linear_w(d, h, *params_, prefix_ + ".w1", init);
        f_b1_ = init_zeros({h}, *params_, prefix_ + ".b1");
        f_w2_ = init_linear_w(h, d, *params_, prefix_ + ".w2", init, 0.1);
        f_b2_ = init_zeros({d}, *params_, prefix_ + ".b2");
    }
}

Tensor IvpSolver::flow_forward(const Tensor& states, const Tensor& dt_col) const {
    Tensor gate = tanh(matmul(dt_col, w_gate_));                 // (n, d)
    Tensor hid = tanh(matmul(states, w1_) + matmul(dt_col, u1_) + b1_);
    Tensor g = matmul(hid, w2_) + b2_;                           // (n, d)
    return states + gate * g;
}

Tensor IvpSolver::flow_inverse(const Tensor& states, const Tensor& dt_col) const {
    // solve F(y, dt) = states for y; iterate y <- states - gate (.) g(y, dt)
    Tensor gate = tanh(matmul(dt_col, w_gate_));
    Tensor dt_bias = matmul(dt_col, u1_) + b1_;  // loop-invariant
    Tensor y = states;
    std::vector<double> prev = y.values();
    for (std::size_t it = 0; it < kInverseMaxIter; ++it) {
        Tensor hid = tanh(matmul(y, w1_) + dt_bias);
        Tensor g = matmul(hid, w2_) + b2_;
        y = states - gate * g;
        double delta = 0.0;
        for (std::size_t i = 0; i < prev.size(); ++i)
            delta = std::max(delta, std::fabs(y.values()[i] - prev[i]));
        if (delta < kInverseTol) return y;
        prev = y.values();
    }
    diag::counters().unconverged_inversions += 1;
    return y;
}

Tensor IvpSolver::field(const Tensor& states) const {
    return matmul(states, f_skip_) + matmul(tanh(matmul(states, f_w1_) + f_b1_), f_w2_) +
           f_b2_;
}

Tensor IvpSolver::rk4_row(const Tensor& state_row, double dt) const {
    if (dt == 0.0) return state_row;
    const std::size_t steps = std::max<std::size_t>(
        1, static_cast<std::size_t>(
               std::ceil(std::fabs(dt) * double(cfg_.rk4_steps_per_unit))));
    const double h = dt / double(steps);
    Tensor z = state_row;
    for (std::size_t s = 0; s < steps; ++s) {
        Tensor k1 = field(z);
        Tensor k2 = field(z + mul_scalar(k1, h / 2.0));
        Tensor k3 = field(z + mul_scalar(k2, h / 2.0));
        Tensor k4 = field(z + mul_scalar(k3, h));
        Tensor incr = k1 + mul_scalar(k2, 2.0) + mul_scalar(k3, 2.0) + k4;
        z = z + mul_scalar(incr, h / 6.0);
    }
    return z;
}

Tensor IvpSolver::solve(const Tensor& states, const std::vector<double>& dts) const {
    if (states.shape().size() != 2 || states.shape()[1] != cfg_.latent_dim)
        throw ShapeError("IvpSolver::solve: states must be (n, " +
                         std::to_string(cfg_.latent_dim) + ")");
    const std::size_t n = states.shape()[0];
    if (dts.size() != n)
        throw ShapeError("IvpSolver::solve: one dt per state row required");
    for (double dt : dts)
        if (!std::isfinite(dt))
            throw DataError("IvpSolver::solve: non-finite dt");
    for (double v : states.values())
        if (!std::isfinite(v))
            throw DataError("IvpSolver::solve: non-finite state");

    if (cfg_.kind == IvpSolverKind::rk4) {
        // per-row integration keeps each output independent of its siblings
        std::vector<Tensor> rows;
        rows.reserve(n);
        for (std::size_t i = 0; i < n; ++i)
            rows.push_back(rk4_row(slice_rows(states, i, 1), dts[i]));
        return n == 1 ? rows[0] : concat_rows(rows);
    }

    bool any_neg = false, any_pos = false;
    for (double dt : dts) {
        any_neg = any_neg || dt < 0.0;
        any_pos = any_pos || dt > 0.0;
    }
    Tensor dt_abs = const_col([&] {
        std::vector<double> a(dts.size());
        for (std::size_t i = 0; i < a.size(); ++i) a[i] = std::fabs(dts[i]);
        return a;
    }());
    if (!any_neg) return flow_forward(states, const_col(dts));
    if (!any_pos) {
        // dt == 0 rows pass through the inverse untouched (gate is 0)
        return flow_inverse(states, dt_abs);
    }
    // mixed signs: split rows by direction
    std::vector<Tensor> rows;
    rows.reserve(n);
    for (std::size_t i = 0; i < n; ++i) {
        Tensor row = slice_rows(states, i, 1);
        Tensor dt_row = const_col({std::fabs(dts[i])});
        rows.push_back(dts[i] >= 0.0 ? flow_forward(row, dt_row)
                                     : flow_inverse(row, dt_row));
    }
    return n == 1 ? rows[0] : concat_rows(rows);
}

// ---------------------------------------------------------------------------
// IvpPatcher

IvpPatcher::IvpPatcher(IvpPatcherConfig cfg, ParamStore& params, RngState& init)
    : cfg_(cfg), params_(&params) {
    const std::size_t d = cfg_.solver.latent_dim;
    const std::size_t p = cfg_.patch_len;
    if (cfg_.flat_fallback) {
        in_w_ = init_linear_w(p, d, params, "patcher.input.w", init);
        in_b_ = init_zeros({d}, params, "patcher.input.b");
        out_w_ = init_linear_w(d, p, params, "patcher.output.w", init);
        out_b_ = init_zeros({p}, params, "patcher.output.b");
    } else {
        in_w_ = init_linear_w(1, d, params, "patcher.input.w", init);
        in_b_ = init_zeros({d}, params, "patcher.input.b");
        out_w_ = init_linear_w(d, 1, params, "patcher.output.w", init);
        out_b_ = init_zeros({1}, params, "patcher.output.b");
        enc_solver_.emplace(cfg_.solver, params, "patcher.enc", init);
        dec_solver_.emplace(cfg_.solver, params, "patcher.dec", init);
    }
    mu_w_ = init_linear_w(d, d, params, "patcher.inf.mu.w", init);
    mu_b_ = init_zeros({d}, params, "patcher.inf.mu.b");
    sig_w_ = init_linear_w(d, d, params, "patcher.inf.sigma.w", init);
    sig_b_ = init_zeros({d}, params, "patcher.inf.sigma.b");
}

namespace {

// moment-matched single diagonal Gaussian over per-point components;
// exact when all components coincide
void aggregate_mixture(const Tensor& mu, const Tensor& sigma,
                       PatchPosterior& out) {
    const std::size_t n = mu.shape()[0];
    Tensor sel = Tensor::full({1, n}, 1.0 / double(n));
    Tensor agg_mu = matmul(sel, mu);
    Tensor second = matmul(sel, square(sigma) + square(mu));
    Tensor var = clamp_min(second - square(agg_mu), kAggVarFloor);
    out.comp_mu = mu;
    out.comp_sigma = sigma;
    out.agg_mu = agg_mu;
    out.agg_sigma = sqrt(var);
}

Tensor sample_or_mean(const PatchPosterior& post, bool sample, RngState& noise,
                      std::size_t d) {
    if (!sample) return post.agg_mu;
    std::vector<double> eps(d);
    for (double& e : eps) e = noise.next_normal();
    Tensor eps_t = Tensor::from_values({1, d}, std::move(eps));
    return post.agg_mu + post.agg_sigma * eps_t;
}

}  // namespace

EncodeResult IvpPatcher::encode(const Patch& patch, bool sample,
                                RngState& noise) const {
    if (patch.observed_count() == 0)
        throw DataError("encode: patch has no observed point");
    if (cfg_.flat_fallback) return encode_flat(patch, sample, noise);

    std::vector<double> xs, dts;
    for (std::size_t i = 0; i < patch.count(); ++i)
        if (patch.observed[i]) {
            xs.push_back(patch.values[i]);
            dts.push_back(patch.tau - patch.times[i]);  // backward to tau
        }
    const std::size_t n = xs.size();
    const std::size_t d = cfg_.solver.latent_dim;

    Tensor x_col = Tensor::from_values({n, 1}, std::move(xs));
    Tensor z = matmul(x_col, in_w_) + in_b_;     // (n, d)
    Tensor z0 = enc_solver_->solve(z, dts);      // evolve to the patch start

    EncodeResult res;
    Tensor mu = matmul(z0, mu_w_) + mu_b_;
    Tensor sigma = softplus(matmul(z0, sig_w_) + sig_b_);
    aggregate_mixture(mu, sigma, res.posterior);
    res.representation = sample_or_mean(res.posterior, sample, noise, d);
    return res;
}

EncodeResult IvpPatcher::encode_flat(const Patch& patch, bool sample,
                                     RngState& noise) const {
    // zero-padded fixed-length value vector, timestamps ignored
    const std::size_t p = cfg_.patch_len;
    const std::size_t d = cfg_.solver.latent_dim;
    std::vector<double> xs(p, 0.0);
    for (std::size_t i = 0; i < patch.count() && i < p; ++i)
        if (patch.observed[i]) xs[i] = patch.values[i];
    Tensor x_row = Tensor::from_values({1, p}, std::move(xs));
    Tensor z = matmul(x_row, in_w_) + in_b_;  // (1, d)

    EncodeResult res;
    Tensor mu = matmul(z, mu_w_) + mu_b_;
    Tensor sigma = softplus(matmul(z, sig_w_) + sig_b_);
    aggregate_mixture(mu, sigma, res.posterior);
    res.representation = sample_or_mean(res.posterior, sample, noise, d);
    return res;
}

Tensor IvpPatcher::decode(const Tensor& r_hat,
                          const std::vector<double>& target_times,
                          double tau_start) const {
    if (target_times.empty()) throw DataError("decode: no target times");
    for (std::size_t i = 1; i < target_times.size(); ++i)
        if (!(target_times[i] > target_times[i - 1]))
            throw DataError("decode: target times must be ascending");
    if (target_times.front() < tau_start)
        throw DataError("decode: first target time precedes tau_start");

    const std::size_t n = target_times.size();
    if (cfg_.flat_fallback) {
        if (n > cfg_.patch_len)
            throw DataError("decode: more targets than the fixed patch length");
        Tensor all = matmul(r_hat, out_w_) + out_b_;  // (1, p)
        return transpose(slice_cols(all, 0, n));      // (n, 1)
    }

    std::vector<double> dts(n);
    for (std::size_t i = 0; i < n; ++i) dts[i] = target_times[i] - tau_start;
    Tensor rep = matmul(Tensor::full({n, 1}, 1.0), r_hat);  // (n, d)
    Tensor z = dec_solver_->solve(rep, dts);
    return matmul(z, out_w_) + out_b_;  // (n, 1)
}

Tensor kl_to_prior(const PatchPosterior& q) {
    // 0.5 * sum(mu^2 + sigma^2 - 1 - log sigma^2)
    Tensor s2 = square(q.agg_sigma);
    Tensor terms = add_scalar(square(q.agg_mu) + s2 - log(s2), -1.0);
    return mul_scalar(sum(terms), 0.5);
}

}  // namespace flextsf
