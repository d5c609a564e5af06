#include "tbench/nn.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iomanip>
#include <numbers>
#include <sstream>

#include <nlohmann/json.hpp>

#include "tbench/errors.hpp"

namespace tbench {

static_assert(std::endian::native == std::endian::little,
              "checkpoint I/O assumes a little-endian host");

// ---------------------------------------------------------------------------
// MlpParams

std::size_t MlpParams::parameter_count() const {
    std::size_t n = 0;
    for (const auto& l : layers) n += static_cast<std::size_t>(l.weight.size() + l.bias.size());
    return n;
}

double MlpParams::squared_norm() const {
    double s = 0.0;
    for (const auto& l : layers) s += l.weight.squaredNorm() + l.bias.squaredNorm();
    return s;
}

bool MlpParams::all_finite() const {
    for (const auto& l : layers) {
        if (!l.weight.allFinite() || !l.bias.allFinite()) return false;
    }
    return true;
}

void MlpParams::set_zero() {
    for (auto& l : layers) {
        l.weight.setZero();
        l.bias.setZero();
    }
}

void MlpParams::scale(double s) {
    for (auto& l : layers) {
        l.weight *= s;
        l.bias *= s;
    }
}

// ---------------------------------------------------------------------------
// Mlp

Mlp::Mlp(std::vector<int> dims, OutputActivation head) : dims_(std::move(dims)), head_(head) {
    if (dims_.size() < 2) throw InterfaceError("an MLP needs at least input and output sizes");
    for (int d : dims_) {
        if (d <= 0) throw InterfaceError("MLP layer sizes must be positive");
    }
    for (std::size_t i = 0; i + 1 < dims_.size(); ++i) {
        params_.layers.push_back({Eigen::MatrixXd::Zero(dims_[i + 1], dims_[i]),
                                  Eigen::VectorXd::Zero(dims_[i + 1])});
    }
}

Mlp::Mlp(std::vector<int> dims, OutputActivation head, CounterRng& rng, double output_scale)
    : Mlp(std::move(dims), head) {
    for (std::size_t i = 0; i < params_.layers.size(); ++i) {
        auto& l = params_.layers[i];
        const double bound = 1.0 / std::sqrt(static_cast<double>(l.weight.cols()));
        const double s = i + 1 == params_.layers.size() ? output_scale : 1.0;
        for (Eigen::Index c = 0; c < l.weight.cols(); ++c) {
            for (Eigen::Index r = 0; r < l.weight.rows(); ++r) l.weight(r, c) = s * rng.uniform(-bound, bound);
        }
        for (Eigen::Index r = 0; r < l.bias.size(); ++r) l.bias(r) = s * rng.uniform(-bound, bound);
    }
}

Eigen::VectorXd Mlp::forward(const Eigen::VectorXd& input) const {
    if (input.size() != input_size()) {
        throw InterfaceError("MLP input has " + std::to_string(input.size()) + " entries, expected " +
                             std::to_string(input_size()));
    }
    Eigen::VectorXd a = input;
    const auto& layers = params_.layers;
    for (std::size_t i = 0; i < layers.size(); ++i) {
        Eigen::VectorXd z = layers[i].weight * a + layers[i].bias;
        if (i + 1 < layers.size()) {
            a = z.cwiseMax(0.0);
        } else {
            a = head_ == OutputActivation::TANH ? Eigen::VectorXd(z.array().tanh()) : z;
        }
    }
    return a;
}

Eigen::MatrixXd Mlp::forward_batch(const Eigen::MatrixXd& inputs, MlpCache* cache) const {
    if (inputs.rows() != input_size()) {
        throw InterfaceError("MLP batch has " + std::to_string(inputs.rows()) + " rows, expected " +
                             std::to_string(input_size()));
    }
    const auto& layers = params_.layers;
    if (cache != nullptr) {
        cache->activations.resize(layers.size() + 1);
        cache->activations[0] = inputs;
    }
    Eigen::MatrixXd a = inputs;
    for (std::size_t i = 0; i < layers.size(); ++i) {
        Eigen::MatrixXd z = layers[i].weight * a;
        z.colwise() += layers[i].bias;
        if (i + 1 < layers.size()) {
            a = z.cwiseMax(0.0);
        } else if (head_ == OutputActivation::TANH) {
            a = z.array().tanh().matrix();
        } else {
            a = std::move(z);
        }
        if (cache != nullptr) cache->activations[i + 1] = a;
    }
    return a;
}

MlpParams Mlp::backward(const MlpCache& cache, const Eigen::MatrixXd& upstream,
                        Eigen::MatrixXd* input_grad) const {
    const auto& layers = params_.layers;
    if (cache.activations.size() != layers.size() + 1) {
        throw InterfaceError("MLP cache does not match the network depth");
    }
    const Eigen::MatrixXd& out = cache.activations.back();
    if (upstream.rows() != out.rows() || upstream.cols() != out.cols()) {
        throw InterfaceError("upstream gradient shape does not match the network output");
    }

    MlpParams grads;
    grads.layers.resize(layers.size());
    Eigen::MatrixXd g = upstream;
    if (head_ == OutputActivation::TANH) g.array() *= 1.0 - out.array().square();

    for (std::size_t i = layers.size(); i-- > 0;) {
        const Eigen::MatrixXd& a_prev = cache.activations[i];
        grads.layers[i].weight.noalias() = g * a_prev.transpose();
        grads.layers[i].bias = g.rowwise().sum();
        if (i > 0 || input_grad != nullptr) {
            Eigen::MatrixXd back = layers[i].weight.transpose() * g;
            if (i > 0) {
                g = (a_prev.array() > 0.0).select(back, 0.0);
            } else {
                *input_grad = std::move(back);
            }
        }
    }
    return grads;
}

MlpParams Mlp::backward(const Eigen::VectorXd& input, const Eigen::VectorXd& upstream) const {
    MlpCache cache;
    forward_batch(input, &cache);
    return backward(cache, upstream);
}

std::string Mlp::checksum() const {
    std::uint64_t h = 0xCBF29CE484222325ULL;
    auto feed = [&](const double* data, Eigen::Index n) {
        const auto* bytes = reinterpret_cast<const unsigned char*>(data);
        for (std::size_t i = 0; i < static_cast<std::size_t>(n) * sizeof(double); ++i) {
            h ^= bytes[i];
            h *= 0x100000001B3ULL;
        }
    };
    for (const auto& l : params_.layers) {
        feed(l.weight.data(), l.weight.size());
        feed(l.bias.data(), l.bias.size());
    }
    std::ostringstream os;
    os << std::hex << std::setw(16) << std::setfill('0') << h;
    return os.str();
}

// ---------------------------------------------------------------------------
// Adam

Adam::Adam(const Mlp& net, double lr, double beta1, double beta2, double eps)
    : lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps), m_(net.params()), v_(net.params()) {
    m_.set_zero();
    v_.set_zero();
}

void Adam::step(Mlp& net, const MlpParams& grads) {
    auto& params = net.params();
    if (grads.layers.size() != params.layers.size()) {
        throw InterfaceError("gradient does not match the network shape");
    }
    for (std::size_t i = 0; i < grads.layers.size(); ++i) {
        if (grads.layers[i].weight.rows() != params.layers[i].weight.rows() ||
            grads.layers[i].weight.cols() != params.layers[i].weight.cols() ||
            grads.layers[i].bias.size() != params.layers[i].bias.size()) {
            throw InterfaceError("gradient does not match the network shape");
        }
    }
    if (!grads.all_finite()) throw NumericFaultError("non-finite gradient rejected by Adam");

    ++t_;
    const double c1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
    const double c2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
    auto update = [&](auto& p, auto& m, auto& v, const auto& g) {
        m = beta1_ * m + (1.0 - beta1_) * g;
        v = beta2_ * v + (1.0 - beta2_) * g.cwiseProduct(g);
        p.array() -= lr_ * (m.array() / c1) / ((v.array() / c2).sqrt() + eps_);
    };
    for (std::size_t i = 0; i < grads.layers.size(); ++i) {
        update(params.layers[i].weight, m_.layers[i].weight, v_.layers[i].weight, grads.layers[i].weight);
        update(params.layers[i].bias, m_.layers[i].bias, v_.layers[i].bias, grads.layers[i].bias);
    }
}

double clip_global_norm(MlpParams& grads, double max_norm) {
    const double norm = std::sqrt(grads.squared_norm());
    if (norm > max_norm && norm > 0.0) grads.scale(max_norm / norm);
    return norm;
}

// ---------------------------------------------------------------------------
// Policy helpers

double gaussian_logprob(double variance, const Eigen::VectorXd& mean, const Eigen::VectorXd& action) {
    if (mean.size() != action.size()) throw InterfaceError("mean and action sizes differ");
    const double log_norm = -0.5 * std::log(2.0 * std::numbers::pi * variance);
    return static_cast<double>(mean.size()) * log_norm -
           0.5 * (action - mean).squaredNorm() / variance;
}

double GaussianPolicy::logprob(const Eigen::VectorXd& mean, const Eigen::VectorXd& action) const {
    return gaussian_logprob(variance, mean, action);
}

Eigen::VectorXd GaussianPolicy::sample(const Eigen::VectorXd& mean, CounterRng& rng) const {
    const double sd = std::sqrt(variance);
    Eigen::VectorXd a(mean.size());
    for (Eigen::Index i = 0; i < mean.size(); ++i) a(i) = mean(i) + sd * rng.normal();
    return a;
}

void polyak_update(Mlp& target, const Mlp& main, double rho) {
    auto& t = target.params().layers;
    const auto& m = main.params().layers;
    if (t.size() != m.size()) throw InterfaceError("polyak_update: network shapes differ");
    for (std::size_t i = 0; i < t.size(); ++i) {
        if (t[i].weight.rows() != m[i].weight.rows() || t[i].weight.cols() != m[i].weight.cols()) {
            throw InterfaceError("polyak_update: network shapes differ");
        }
        t[i].weight = rho * t[i].weight + (1.0 - rho) * m[i].weight;
        t[i].bias = rho * t[i].bias + (1.0 - rho) * m[i].bias;
    }
}

// ---------------------------------------------------------------------------
// RunningNormalizer

RunningNormalizer::RunningNormalizer(int size, double clip_range, double raw_clip, double var_floor)
    : sum_(Eigen::VectorXd::Zero(size)),
      sumsq_(Eigen::VectorXd::Zero(size)),
      clip_range_(clip_range),
      raw_clip_(raw_clip),
      var_floor_(var_floor) {}

Eigen::VectorXd RunningNormalizer::mean() const {
    if (count_ <= 0.0) return Eigen::VectorXd::Zero(size());
    return sum_ / count_;
}

Eigen::VectorXd RunningNormalizer::variance() const {
    if (count_ <= 0.0) return Eigen::VectorXd::Ones(size());
    const Eigen::VectorXd mu = mean();
    return (sumsq_ / count_ - mu.cwiseProduct(mu)).cwiseMax(var_floor_);
}

Eigen::VectorXd RunningNormalizer::normalize(const Eigen::VectorXd& obs) const {
    if (obs.size() != size()) {
        throw InterfaceError("normalizer expects " + std::to_string(size()) + " entries, got " +
                             std::to_string(obs.size()));
    }
    const Eigen::VectorXd raw = obs.cwiseMax(-raw_clip_).cwiseMin(raw_clip_);
    const Eigen::VectorXd z = (raw - mean()).cwiseQuotient(variance().cwiseSqrt());
    return z.cwiseMax(-clip_range_).cwiseMin(clip_range_);
}

Eigen::MatrixXd RunningNormalizer::normalize_batch(const Eigen::MatrixXd& obs) const {
    if (obs.rows() != size()) throw InterfaceError("normalizer batch has the wrong row count");
    const Eigen::VectorXd mu = mean();
    const Eigen::VectorXd inv_sd = variance().cwiseSqrt().cwiseInverse();
    Eigen::MatrixXd z = obs.cwiseMax(-raw_clip_).cwiseMin(raw_clip_);
    z.colwise() -= mu;
    z = inv_sd.asDiagonal() * z;
    return z.cwiseMax(-clip_range_).cwiseMin(clip_range_);
}

void RunningNormalizer::update(const Eigen::MatrixXd& samples) {
    if (samples.rows() != size()) throw InterfaceError("normalizer update has the wrong row count");
    const Eigen::MatrixXd raw = samples.cwiseMax(-raw_clip_).cwiseMin(raw_clip_);
    sum_ += raw.rowwise().sum();
    sumsq_ += raw.cwiseProduct(raw).rowwise().sum();
    count_ += static_cast<double>(samples.cols());
}

void RunningNormalizer::merge(const RunningNormalizer& other) {
    if (other.size() != size()) throw InterfaceError("cannot merge normalizers of different sizes");
    sum_ += other.sum_;
    sumsq_ += other.sumsq_;
    count_ += other.count_;
}

// ---------------------------------------------------------------------------
// Checkpoints

void save_checkpoint(std::ostream& out, const Mlp& net, const std::map<std::string, long>& counters) {
    nlohmann::json header;
    header["format"] = "tbench-mlp";
    header["version"] = 1;
    header["dims"] = net.dims();
    header["head"] = net.head() == OutputActivation::TANH ? "tanh" : "identity";
    header["counters"] = counters;
    header["parameter_count"] = net.params().parameter_count();
    const std::string text = header.dump();
    const std::uint64_t len = text.size();
    out.write(reinterpret_cast<const char*>(&len), sizeof(len));
    out.write(text.data(), static_cast<std::streamsize>(text.size()));
    for (const auto& l : net.params().layers) {
        // Eigen is column-major; write row-major so the file order is independent of storage.
        for (Eigen::Index r = 0; r < l.weight.rows(); ++r) {
            for (Eigen::Index c = 0; c < l.weight.cols(); ++c) {
                const double v = l.weight(r, c);
                out.write(reinterpret_cast<const char*>(&v), sizeof(v));
            }
        }
        out.write(reinterpret_cast<const char*>(l.bias.data()),
                  static_cast<std::streamsize>(l.bias.size() * static_cast<Eigen::Index>(sizeof(double))));
    }
    if (!out) throw Error("failed to write checkpoint");
}

Mlp load_checkpoint(std::istream& in, std::map<std::string, long>* counters) {
    std::uint64_t len = 0;
    in.read(reinterpret_cast<char*>(&len), sizeof(len));
    if (!in || len > (1u << 20)) throw InterfaceError("checkpoint header is malformed");
    std::string text(len, '\0');
    in.read(text.data(), static_cast<std::streamsize>(len));
    const auto header = nlohmann::json::parse(text);
    if (header.value("format", "") != "tbench-mlp") throw InterfaceError("not a tbench checkpoint");
    const auto head = header.at("head").get<std::string>() == "tanh" ? OutputActivation::TANH
                                                                    : OutputActivation::IDENTITY;
    Mlp net(header.at("dims").get<std::vector<int>>(), head);
    for (auto& l : net.params().layers) {
        for (Eigen::Index r = 0; r < l.weight.rows(); ++r) {
            for (Eigen::Index c = 0; c < l.weight.cols(); ++c) {
                in.read(reinterpret_cast<char*>(&l.weight(r, c)), sizeof(double));
            }
        }
        in.read(reinterpret_cast<char*>(l.bias.data()),
                static_cast<std::streamsize>(l.bias.size() * static_cast<Eigen::Index>(sizeof(double))));
    }
    if (!in) throw InterfaceError("checkpoint is truncated");
    if (counters != nullptr) *counters = header.at("counters").get<std::map<std::string, long>>();
    return net;
}

void save_checkpoint(const std::filesystem::path& path, const Mlp& net,
                     const std::map<std::string, long>& counters) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error("cannot open " + path.string() + " for writing");
    save_checkpoint(out, net, counters);
}

Mlp load_checkpoint(const std::filesystem::path& path, std::map<std::string, long>* counters) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw LookupError("cannot open checkpoint " + path.string());
    return load_checkpoint(in, counters);
}

}  // namespace tbench
