#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "tbench/rng.hpp"

namespace tbench {

enum class OutputActivation : std::uint8_t { TANH, IDENTITY };

struct DenseLayer {
    Eigen::MatrixXd weight;  // out x in
    Eigen::VectorXd bias;    // out
};

/// Parameter-shaped container, used for gradients and optimizer moments.
struct MlpParams {
    std::vector<DenseLayer> layers;

    std::size_t parameter_count() const;
    double squared_norm() const;
    bool all_finite() const;
    void set_zero();
    void scale(double s);
};

/// Activations recorded by a batched forward pass, consumed by backward.
struct MlpCache {
    std::vector<Eigen::MatrixXd> activations;  // activations[0] is the input
};

/// Fully connected network: ReLU hidden layers, TANH or IDENTITY head.
/// Batched calls take one sample per column.
class Mlp {
public:
    Mlp() = default;
    /// Zero-initialized parameters.
    Mlp(std::vector<int> dims, OutputActivation head);
    /// U(-1/sqrt(fan_in), 1/sqrt(fan_in)) init; the output layer is further
    /// scaled by `output_scale`.
    Mlp(std::vector<int> dims, OutputActivation head, CounterRng& rng, double output_scale = 1.0);

    const std::vector<int>& dims() const noexcept { return dims_; }
    int input_size() const noexcept { return dims_.front(); }
    int output_size() const noexcept { return dims_.back(); }
    OutputActivation head() const noexcept { return head_; }

    Eigen::VectorXd forward(const Eigen::VectorXd& input) const;
    Eigen::MatrixXd forward_batch(const Eigen::MatrixXd& inputs, MlpCache* cache = nullptr) const;

    /// Reverse-mode gradients of sum(upstream .* output) with respect to the
    /// parameters; optionally also with respect to the inputs.
    MlpParams backward(const MlpCache& cache, const Eigen::MatrixXd& upstream,
                       Eigen::MatrixXd* input_grad = nullptr) const;
    MlpParams backward(const Eigen::VectorXd& input, const Eigen::VectorXd& upstream) const;

    MlpParams& params() noexcept { return params_; }
    const MlpParams& params() const noexcept { return params_; }

    /// FNV-1a over the raw parameter bytes, as 16 hex digits.
    std::string checksum() const;

private:
    std::vector<int> dims_;
    OutputActivation head_ = OutputActivation::IDENTITY;
    MlpParams params_;
};

/// Bias-corrected Adam.
class Adam {
public:
    Adam() = default;
    Adam(const Mlp& net, double lr, double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8);

    /// Throws NumericFaultError (leaving `net` untouched) if `grads` holds NaN/Inf.
    void step(Mlp& net, const MlpParams& grads);

    long t() const noexcept { return t_; }
    double lr() const noexcept { return lr_; }
    const MlpParams& first_moment() const noexcept { return m_; }
    const MlpParams& second_moment() const noexcept { return v_; }

private:
    double lr_ = 1e-3;
    double beta1_ = 0.9;
    double beta2_ = 0.999;
    double eps_ = 1e-8;
    long t_ = 0;
    MlpParams m_;
    MlpParams v_;
};

/// Rescales `grads` so its global L2 norm is at most `max_norm`. Returns the
/// norm before clipping.
double clip_global_norm(MlpParams& grads, double max_norm);

/// Diagonal Gaussian with a fixed variance around a network mean.
struct GaussianPolicy {
    Mlp mean_net;
    double variance = 0.05;

    double logprob(const Eigen::VectorXd& mean, const Eigen::VectorXd& action) const;
    Eigen::VectorXd sample(const Eigen::VectorXd& mean, CounterRng& rng) const;
};

double gaussian_logprob(double variance, const Eigen::VectorXd& mean, const Eigen::VectorXd& action);

/// target <- rho * target + (1 - rho) * main.
void polyak_update(Mlp& target, const Mlp& main, double rho);

/// Running mean/variance with raw and normalized clipping.
class RunningNormalizer {
public:
    explicit RunningNormalizer(int size = 0, double clip_range = 5.0, double raw_clip = 200.0,
                               double var_floor = 1e-8);

    int size() const noexcept { return static_cast<int>(sum_.size()); }
    double count() const noexcept { return count_; }
    Eigen::VectorXd mean() const;
    Eigen::VectorXd variance() const;

    /// Pure: clip raw, standardize, clip normalized.
    Eigen::VectorXd normalize(const Eigen::VectorXd& obs) const;
    Eigen::MatrixXd normalize_batch(const Eigen::MatrixXd& obs) const;

    /// Accumulates (raw-clipped) samples, one per column.
    void update(const Eigen::MatrixXd& samples);
    /// Adds another normalizer's accumulated statistics.
    void merge(const RunningNormalizer& other);

private:
    Eigen::VectorXd sum_;
    Eigen::VectorXd sumsq_;
    double count_ = 0.0;
    double clip_range_;
    double raw_clip_;
    double var_floor_;
};

/// Checkpoint layout: u64 little-endian header length, JSON header, then every
/// weight and bias as 64-bit little-endian doubles in layer order.
void save_checkpoint(std::ostream& out, const Mlp& net,
                     const std::map<std::string, long>& counters = {});
Mlp load_checkpoint(std::istream& in, std::map<std::string, long>* counters = nullptr);
void save_checkpoint(const std::filesystem::path& path, const Mlp& net,
                     const std::map<std::string, long>& counters = {});
Mlp load_checkpoint(const std::filesystem::path& path, std::map<std::string, long>* counters = nullptr);

}  // namespace tbench
