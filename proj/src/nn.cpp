#include "mvrlab/nn.hpp"

#include "mvrlab/core.hpp"

#include <algorithm>
#include <cmath>

namespace mvrlab {

Mlp::Mlp(const std::vector<int>& sizes, Rng& rng) {
    if (sizes.size() < 2)
        throw InvalidArgument("an MLP needs at least input and output sizes");
    for (std::size_t l = 0; l + 1 < sizes.size(); ++l) {
        const int in = sizes[l];
        const int out = sizes[l + 1];
        if (in < 1 || out < 1)
            throw InvalidArgument("MLP layer sizes must be positive");
        const double bound = 1.0 / std::sqrt(static_cast<double>(in));
        Eigen::MatrixXd W(out, in);
        Eigen::VectorXd b(out);
        for (Eigen::Index i = 0; i < W.size(); ++i)
            W.data()[i] = rng.uniform(-bound, bound);
        for (Eigen::Index i = 0; i < b.size(); ++i)
            b[i] = rng.uniform(-bound, bound);
        weights_.push_back(std::move(W));
        biases_.push_back(std::move(b));
    }
}

Mlp Mlp::zeros_like(const Mlp& m) {
    Mlp z;
    for (std::size_t l = 0; l < m.weights_.size(); ++l) {
        z.weights_.push_back(Eigen::MatrixXd::Zero(m.weights_[l].rows(), m.weights_[l].cols()));
        z.biases_.push_back(Eigen::VectorXd::Zero(m.biases_[l].size()));
    }
    return z;
}

Eigen::MatrixXd Mlp::forward(const Eigen::MatrixXd& X, Cache* cache) const {
    if (X.rows() != input_dim())
        throw InvalidArgument("MLP input has wrong dimension");
    if (cache != nullptr) {
        cache->inputs.clear();
        cache->pre.clear();
    }
    Eigen::MatrixXd h = X;
    for (std::size_t l = 0; l < weights_.size(); ++l) {
        Eigen::MatrixXd z = (weights_[l] * h).colwise() + biases_[l];
        if (cache != nullptr) {
            cache->inputs.push_back(h);
            cache->pre.push_back(z);
        }
        h = l + 1 < weights_.size() ? z.cwiseMax(0.0) : z;
    }
    return h;
}

Eigen::MatrixXd Mlp::backward(const Cache& cache, const Eigen::MatrixXd& d_out, Mlp* grad) const {
    Eigen::MatrixXd d = d_out;
    for (std::size_t l = weights_.size(); l-- > 0;) {
        if (l + 1 < weights_.size())
            d = d.cwiseProduct((cache.pre[l].array() > 0.0).cast<double>().matrix());
        if (grad != nullptr) {
            grad->weights_[l] += d * cache.inputs[l].transpose();
            grad->biases_[l] += d.rowwise().sum();
        }
        d = weights_[l].transpose() * d;
    }
    return d;
}

std::size_t Mlp::num_params() const {
    std::size_t n = 0;
    for (std::size_t l = 0; l < weights_.size(); ++l)
        n += static_cast<std::size_t>(weights_[l].size() + biases_[l].size());
    return n;
}

std::vector<double> Mlp::flat() const {
    std::vector<double> out;
    out.reserve(num_params());
    for (std::size_t l = 0; l < weights_.size(); ++l) {
        out.insert(out.end(), weights_[l].data(), weights_[l].data() + weights_[l].size());
        out.insert(out.end(), biases_[l].data(), biases_[l].data() + biases_[l].size());
    }
    return out;
}

void Mlp::set_flat(std::span<const double> values) {
    if (values.size() != num_params())
        throw InvalidArgument("MLP parameter count mismatch");
    auto it = values.begin();
    for (std::size_t l = 0; l < weights_.size(); ++l) {
        for (Eigen::Index i = 0; i < weights_[l].size(); ++i)
            weights_[l].data()[i] = *it++;
        for (Eigen::Index i = 0; i < biases_[l].size(); ++i)
            biases_[l][i] = *it++;
    }
}

bool Mlp::all_finite() const {
    for (std::size_t l = 0; l < weights_.size(); ++l)
        if (!weights_[l].allFinite() || !biases_[l].allFinite())
            return false;
    return true;
}

void Mlp::soft_update_from(const Mlp& online, double tau) {
    for (std::size_t l = 0; l < weights_.size(); ++l) {
        weights_[l] = tau * online.weights_[l] + (1.0 - tau) * weights_[l];
        biases_[l] = tau * online.biases_[l] + (1.0 - tau) * biases_[l];
    }
}

void Mlp::scale(double s) {
    for (std::size_t l = 0; l < weights_.size(); ++l) {
        weights_[l] *= s;
        biases_[l] *= s;
    }
}

void Mlp::add_scaled(const Mlp& other, double s) {
    for (std::size_t l = 0; l < weights_.size(); ++l) {
        weights_[l] += s * other.weights_[l];
        biases_[l] += s * other.biases_[l];
    }
}

std::uint64_t Mlp::activation_pattern(const Cache& cache) {
    std::uint64_t h = 0x1234;
    // The output layer is linear, so only hidden pre-activations matter.
    for (std::size_t l = 0; l + 1 < cache.pre.size(); ++l)
        for (Eigen::Index i = 0; i < cache.pre[l].size(); ++i)
            h = splitmix64(h ^ (cache.pre[l].data()[i] > 0.0 ? 0xa5ULL : 0x5aULL));
    return h;
}

Adam::Adam(const Mlp& like, double lr, double beta1, double beta2, double eps)
    : m_(Mlp::zeros_like(like)), v_(Mlp::zeros_like(like)), lr_(lr), beta1_(beta1), beta2_(beta2),
      eps_(eps) {}

void Adam::step(Mlp& params, const Mlp& grad) {
    ++t_;
    const double c1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
    const double c2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
    auto update = [&](auto& p, auto& m, auto& v, const auto& g) {
        m = beta1_ * m + (1.0 - beta1_) * g;
        v = beta2_ * v + (1.0 - beta2_) * g.cwiseProduct(g);
        p.array() -= lr_ * (m.array() / c1) / ((v.array() / c2).sqrt() + eps_);
    };
    for (std::size_t l = 0; l < params.weights().size(); ++l) {
        update(params.weights()[l], m_.weights()[l], v_.weights()[l], grad.weights()[l]);
        update(params.biases()[l], m_.biases()[l], v_.biases()[l], grad.biases()[l]);
    }
}

double mse_loss(const Mlp& net, const Eigen::MatrixXd& X, const Eigen::MatrixXd& Y, Mlp* grad,
                std::uint64_t* pattern) {
    Mlp::Cache cache;
    const Eigen::MatrixXd out = net.forward(X, &cache);
    if (out.rows() != Y.rows() || out.cols() != Y.cols())
        throw InvalidArgument("target shape does not match network output");
    const Eigen::MatrixXd diff = out - Y;
    const double n = static_cast<double>(X.cols());
    if (grad != nullptr)
        net.backward(cache, (2.0 / n) * diff, grad);
    if (pattern != nullptr)
        *pattern = Mlp::activation_pattern(cache);
    return diff.squaredNorm() / n;
}

MlpGradCheck mse_grad_check(const Mlp& net, const Eigen::MatrixXd& X, const Eigen::MatrixXd& Y,
                            double epsilon, double floor) {
    if (!(epsilon >= 1e-7 && epsilon <= 1e-3))
        throw InvalidArgument("grad check epsilon must lie in [1e-7, 1e-3]");
    Mlp grad = Mlp::zeros_like(net);
    std::uint64_t base = 0;
    mse_loss(net, X, Y, &grad, &base);
    const std::vector<double> analytic = grad.flat();
    std::vector<double> params = net.flat();
    Mlp probe = net;
    MlpGradCheck res;
    for (std::size_t k = 0; k < params.size(); ++k) {
        const double orig = params[k];
        std::uint64_t pp = 0, pm = 0;
        params[k] = orig + epsilon;
        probe.set_flat(params);
        const double lp = mse_loss(probe, X, Y, nullptr, &pp);
        params[k] = orig - epsilon;
        probe.set_flat(params);
        const double lm = mse_loss(probe, X, Y, nullptr, &pm);
        params[k] = orig;
        if (pp != base || pm != base) {
            ++res.skipped_kinks;
            continue;
        }
        const double numeric = (lp - lm) / (2.0 * epsilon);
        const double denom = std::max({std::abs(analytic[k]), std::abs(numeric), floor});
        res.max_rel_error = std::max(res.max_rel_error, std::abs(analytic[k] - numeric) / denom);
        ++res.checked;
    }
    return res;
}

}  // namespace mvrlab
