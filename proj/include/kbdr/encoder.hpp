#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "kbdr/sampling.hpp"

namespace kbdr {

/// Sparse feature vector: sorted, unique indices.
struct SparseFeatures {
    std::vector<std::uint32_t> index;
    std::vector<double> value;

    bool empty() const { return index.empty(); }
    std::size_t size() const { return index.size(); }
};

/// Signed feature hashing of unigrams and bigrams of `tokenize(text)`. Each
/// occupied bucket holds the sign of its summed hash signs (presence, not counts).
class FeatureHasher {
public:
    FeatureHasher(std::size_t dim, std::uint64_t seed);
    SparseFeatures features(std::string_view text) const;
    std::size_t dim() const { return dim_; }

private:
    void add(std::string_view key, std::unordered_map<std::uint32_t, double>& acc) const;

    std::size_t dim_;
    std::uint64_t basis_;
};

using EmbeddingVector = std::vector<double>;

/// Distance the margin thresholds are compared against: the cosine
/// distance 1 - cos (literal) or the angle arccos(cos).
enum class DistanceSpace { cosine, angular };

const char* to_string(DistanceSpace space);
DistanceSpace parse_distance_space(std::string_view name);

struct EncoderConfig {
    std::size_t feature_dim = 1u << 16;
    std::size_t output_dim = 256;
    std::uint64_t hash_seed = 1;

    void validate() const;
};

/// Shared bi-encoder: hashed features -> linear projection (F x d) -> L2 norm.
class EncoderModel {
public:
    EncoderModel(std::size_t feature_dim, std::size_t output_dim, std::uint64_t hash_seed);

    /// Gaussian N(0, 1/d) weights drawn from `seed`.
    static EncoderModel initialize(const EncoderConfig& config, std::uint64_t seed);

    std::size_t feature_dim() const { return feature_dim_; }
    std::size_t output_dim() const { return output_dim_; }
    std::uint64_t hash_seed() const { return hash_seed_; }

    std::span<double> weights() { return weights_; }
    std::span<const double> weights() const { return weights_; }
    std::span<double> row(std::size_t r) { return {weights_.data() + r * output_dim_, output_dim_}; }
    std::span<const double> row(std::size_t r) const {
        return {weights_.data() + r * output_dim_, output_dim_};
    }

    SparseFeatures features(std::string_view text) const { return hasher_.features(text); }
    /// W^T x, before normalization.
    std::vector<double> project(const SparseFeatures& x) const;
    EmbeddingVector encode(const SparseFeatures& x) const;
    EmbeddingVector encode(std::string_view text) const { return encode(features(text)); }

    void save(std::ostream& out) const;
    static EncoderModel load(std::istream& in, const std::string& source = "<checkpoint>");
    void save(const std::filesystem::path& path) const;
    static EncoderModel load(const std::filesystem::path& path);

    bool operator==(const EncoderModel& other) const;

private:
    std::size_t feature_dim_;
    std::size_t output_dim_;
    std::uint64_t hash_seed_;
    FeatureHasher hasher_;
    std::vector<double> weights_;
};

/// Unit vector returned for text with no features: e_0.
EmbeddingVector fallback_vector(std::size_t dim);

double dot(std::span<const double> a, std::span<const double> b);
double l2_norm(std::span<const double> v);

/// 1 - u.v / (|u||v|); throws NumericError on a zero vector.
double cosine_distance(std::span<const double> u, std::span<const double> v);

/// arccos(1 - mu); throws NumericError unless mu lies in [0, 2].
double margin_threshold(double mu);

/// l * max(0, dist - theta)^2 + (1 - l) * max(0, theta - dist)^2 with
/// theta = arccos(1 - mu).
double multimargin_loss(double dist, int label, double mu);

struct LossExample {
    const SparseFeatures* query = nullptr;
    const SparseFeatures* doc = nullptr;
    int label = 0;
    double mu = 0.0;
};

/// Row-sparse gradient of the mean batch loss w.r.t. the weight matrix.
struct Gradient {
    double loss = 0.0;
    std::size_t output_dim = 0;
    std::vector<std::uint32_t> rows;  ///< ascending
    std::vector<double> values;       ///< rows.size() x output_dim

    std::span<const double> row(std::size_t i) const {
        return {values.data() + i * output_dim, output_dim};
    }
    /// d(loss)/d(W[row, col]); zero for rows not present.
    double at(std::uint32_t row, std::size_t col) const;
};

/// Distance between the encoded pair in the requested space.
double pair_distance(const EncoderModel& model, const SparseFeatures& q, const SparseFeatures& d,
                     DistanceSpace space);

/// Mean loss over `batch` and its exact gradient through projection,
/// normalization and the hinge (subgradient 0 at the kink).
Gradient loss_gradient(const EncoderModel& model, std::span<const LossExample> batch,
                       DistanceSpace space = DistanceSpace::cosine);

enum class Optimizer { sgd, adamw };
const char* to_string(Optimizer optimizer);
Optimizer parse_optimizer(std::string_view name);

struct TrainConfig {
    std::size_t batch_size = 32;
    std::size_t epochs = 8;
    double learning_rate = 0.01;
    double warmup_fraction = 0.1;
    double weight_decay = 10.0;
    /// AdamW keeps moments only for rows a batch touches and decays only those rows.
    Optimizer optimizer = Optimizer::adamw;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
    std::uint64_t seed = 7;
    DistanceSpace distance_space = DistanceSpace::cosine;

    void validate() const;
};

/// Linear warmup over the first `warmup_fraction` of steps, then linear
/// decay to zero. `step` is 0-based.
double learning_rate_at(const TrainConfig& config, std::size_t step, std::size_t total_steps);

struct TrainStep {
    std::size_t epoch = 0;
    std::size_t step = 0;
    double loss = 0.0;
    double learning_rate = 0.0;
};

struct TrainResult {
    EncoderModel model;
    std::vector<double> epoch_loss;  ///< example-weighted mean loss per epoch
    std::vector<TrainStep> trace;
};

/// Text for every query_id and doc_id referenced by the training set.
struct TextLookup {
    std::unordered_map<std::string, std::string> query_text;
    std::unordered_map<std::string, std::string> doc_text;
};

/// Mini-batch gradient descent over `assemble_batches` of each epoch.
/// Throws NumericError on a non-finite loss.
TrainResult train(EncoderModel model, const std::vector<TrainingExample>& examples,
                  const TextLookup& texts, const TrainConfig& config);

void write_loss_trace(std::ostream& out, const std::vector<TrainStep>& trace);

}  // namespace kbdr
