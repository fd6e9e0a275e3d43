#pragma once

#include "mvrlab/random.hpp"

#include <Eigen/Dense>

#include <cstdint>
#include <span>
#include <vector>

namespace mvrlab {

/// Fully connected network with ReLU hidden layers and a linear output layer. Inputs and
/// outputs are column-batched: X is (in x batch).
class Mlp {
  public:
    struct Cache {
        std::vector<Eigen::MatrixXd> inputs;  // input to each layer
        std::vector<Eigen::MatrixXd> pre;     // pre-activation of each layer
    };

    Mlp() = default;
    /// sizes = {in, hidden..., out}. Layers use U(-1/sqrt(fan_in), 1/sqrt(fan_in)).
    Mlp(const std::vector<int>& sizes, Rng& rng);

    static Mlp zeros_like(const Mlp& m);

    Eigen::MatrixXd forward(const Eigen::MatrixXd& X, Cache* cache = nullptr) const;
    /// Accumulates parameter gradients into `grad` (if non-null) and returns dL/dX.
    Eigen::MatrixXd backward(const Cache& cache, const Eigen::MatrixXd& d_out, Mlp* grad) const;

    int input_dim() const { return weights_.empty() ? 0 : static_cast<int>(weights_.front().cols()); }
    int output_dim() const { return weights_.empty() ? 0 : static_cast<int>(weights_.back().rows()); }
    std::size_t layers() const { return weights_.size(); }

    std::size_t num_params() const;
    /// Layer by layer: W (column-major) then b.
    std::vector<double> flat() const;
    void set_flat(std::span<const double> values);
    bool all_finite() const;

    /// this <- tau * online + (1 - tau) * this
    void soft_update_from(const Mlp& online, double tau);
    void scale(double s);
    void add_scaled(const Mlp& other, double s);

    std::vector<Eigen::MatrixXd>& weights() { return weights_; }
    std::vector<Eigen::VectorXd>& biases() { return biases_; }
    const std::vector<Eigen::MatrixXd>& weights() const { return weights_; }
    const std::vector<Eigen::VectorXd>& biases() const { return biases_; }

    /// Hash of the ReLU on/off pattern in a cache; used to detect kink crossings.
    static std::uint64_t activation_pattern(const Cache& cache);

  private:
    std::vector<Eigen::MatrixXd> weights_;
    std::vector<Eigen::VectorXd> biases_;
};

class Adam {
  public:
    Adam() = default;
    Adam(const Mlp& like, double lr, double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8);

    void step(Mlp& params, const Mlp& grad);
    void set_learning_rate(double lr) { lr_ = lr; }
    double learning_rate() const { return lr_; }

  private:
    Mlp m_;
    Mlp v_;
    double lr_ = 1e-3;
    double beta1_ = 0.9;
    double beta2_ = 0.999;
    double eps_ = 1e-8;
    std::uint64_t t_ = 0;
};

struct MlpGradCheck {
    double max_rel_error = 0.0;
    std::size_t checked = 0;
    std::size_t skipped_kinks = 0;
};

/// Central-difference check of the gradient of mse_loss with respect to every parameter.
MlpGradCheck mse_grad_check(const Mlp& net, const Eigen::MatrixXd& X, const Eigen::MatrixXd& Y,
                            double epsilon, double floor = 1e-6);

/// Mean over columns of (net(X) - Y)^2 summed over outputs, with optional gradient.
double mse_loss(const Mlp& net, const Eigen::MatrixXd& X, const Eigen::MatrixXd& Y, Mlp* grad,
                std::uint64_t* pattern = nullptr);

}  // namespace mvrlab
