#include "kbdr/encoder.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <istream>
#include <ostream>

#include "kbdr/error.hpp"
#include "kbdr/random.hpp"
#include "kbdr/text.hpp"

namespace kbdr {

// ---------------------------------------------------------------------------
// Feature hashing

FeatureHasher::FeatureHasher(std::size_t dim, std::uint64_t seed)
    : dim_(dim), basis_(0xcbf29ce484222325ULL ^ mix64(seed)) {
    if (dim == 0) throw ConfigError("feature dimension must be positive");
}

void FeatureHasher::add(std::string_view key, std::unordered_map<std::uint32_t, double>& acc) const {
    const std::uint64_t h = fnv1a64(key, basis_);
    const auto slot = static_cast<std::uint32_t>(h % dim_);
    const double sign = (mix64(h) & 1u) ? -1.0 : 1.0;
    acc[slot] += sign;
}

SparseFeatures FeatureHasher::features(std::string_view text) const {
    const auto tokens = tokenize(text);
    std::unordered_map<std::uint32_t, double> acc;
    std::string key;
    for (std::size_t i = 0; i < tokens.size(); ++i) {
        key = "u:";
        key += tokens[i];
        add(key, acc);
        if (i + 1 < tokens.size()) {
            key = "b:";
            key += tokens[i];
            key += ' ';
            key += tokens[i + 1];
            add(key, acc);
        }
    }
    std::vector<std::pair<std::uint32_t, double>> entries;
    entries.reserve(acc.size());
    for (const auto& [slot, v] : acc) {
        if (v != 0.0) entries.emplace_back(slot, v > 0.0 ? 1.0 : -1.0);
    }
    std::sort(entries.begin(), entries.end());
    SparseFeatures out;
    out.index.reserve(entries.size());
    out.value.reserve(entries.size());
    for (const auto& [slot, v] : entries) {
        out.index.push_back(slot);
        out.value.push_back(v);
    }
    return out;
}

// ---------------------------------------------------------------------------
// Model

const char* to_string(DistanceSpace space) {
    return space == DistanceSpace::cosine ? "cosine" : "angular";
}

DistanceSpace parse_distance_space(std::string_view name) {
    if (name == "cosine") return DistanceSpace::cosine;
    if (name == "angular") return DistanceSpace::angular;
    throw ConfigError("unknown distance_space '" + std::string(name) + "'");
}

void EncoderConfig::validate() const {
    if (feature_dim == 0 || feature_dim > (1u << 26)) throw ConfigError("encoder feature_dim out of range");
    if (output_dim == 0 || output_dim > 4096) throw ConfigError("encoder output_dim out of range");
}

EncoderModel::EncoderModel(std::size_t feature_dim, std::size_t output_dim, std::uint64_t hash_seed)
    : feature_dim_(feature_dim),
      output_dim_(output_dim),
      hash_seed_(hash_seed),
      hasher_(feature_dim, hash_seed),
      weights_(feature_dim * output_dim, 0.0) {
    if (output_dim == 0) throw ConfigError("output dimension must be positive");
}

EncoderModel EncoderModel::initialize(const EncoderConfig& config, std::uint64_t seed) {
    config.validate();
    EncoderModel model(config.feature_dim, config.output_dim, config.hash_seed);
    Rng rng(derive_seed(seed, "encoder-init"));
    const double scale = 1.0 / std::sqrt(static_cast<double>(config.output_dim));
    for (auto& w : model.weights_) w = scale * rng.normal();
    return model;
}

std::vector<double> EncoderModel::project(const SparseFeatures& x) const {
    std::vector<double> u(output_dim_, 0.0);
    for (std::size_t k = 0; k < x.size(); ++k) {
        const auto r = row(x.index[k]);
        const double v = x.value[k];
        for (std::size_t j = 0; j < output_dim_; ++j) u[j] += v * r[j];
    }
    return u;
}

EmbeddingVector EncoderModel::encode(const SparseFeatures& x) const {
    auto u = project(x);
    const double n = l2_norm(u);
    if (n == 0.0) return fallback_vector(output_dim_);
    for (auto& v : u) v /= n;
    return u;
}

bool EncoderModel::operator==(const EncoderModel& other) const {
    return feature_dim_ == other.feature_dim_ && output_dim_ == other.output_dim_ &&
           hash_seed_ == other.hash_seed_ && weights_ == other.weights_;
}

namespace {

constexpr char checkpoint_magic[8] = {'K', 'B', 'D', 'R', 'E', 'N', 'C', '\0'};
constexpr std::uint32_t checkpoint_version = 1;

template <typename T>
void write_le(std::ostream& out, T value) {
    unsigned char bytes[sizeof(T)];
    std::memcpy(bytes, &value, sizeof(T));
    if constexpr (std::endian::native == std::endian::big) std::reverse(bytes, bytes + sizeof(T));
    out.write(reinterpret_cast<const char*>(bytes), sizeof(T));
}

template <typename T>
T read_le(std::istream& in, const std::string& source) {
    unsigned char bytes[sizeof(T)];
    if (!in.read(reinterpret_cast<char*>(bytes), sizeof(T))) {
        throw DataError(source + ": truncated file");
    }
    if constexpr (std::endian::native == std::endian::big) std::reverse(bytes, bytes + sizeof(T));
    T value;
    std::memcpy(&value, bytes, sizeof(T));
    return value;
}

}  // namespace

void EncoderModel::save(std::ostream& out) const {
    out.write(checkpoint_magic, sizeof(checkpoint_magic));
    write_le<std::uint32_t>(out, checkpoint_version);
    write_le<std::uint32_t>(out, 0);
    write_le<std::uint64_t>(out, feature_dim_);
    write_le<std::uint64_t>(out, output_dim_);
    write_le<std::uint64_t>(out, hash_seed_);
    for (double w : weights_) write_le<double>(out, w);
}

EncoderModel EncoderModel::load(std::istream& in, const std::string& source) {
    char magic[sizeof(checkpoint_magic)];
    if (!in.read(magic, sizeof(magic)) || std::memcmp(magic, checkpoint_magic, sizeof(magic)) != 0) {
        throw DataError(source + ": not an encoder checkpoint");
    }
    if (read_le<std::uint32_t>(in, source) != checkpoint_version) {
        throw DataError(source + ": unsupported checkpoint version");
    }
    read_le<std::uint32_t>(in, source);
    const auto f = read_le<std::uint64_t>(in, source);
    const auto d = read_le<std::uint64_t>(in, source);
    const auto seed = read_le<std::uint64_t>(in, source);
    if (f == 0 || d == 0 || f > (1u << 26) || d > 4096) throw DataError(source + ": bad dimensions");
    EncoderModel model(f, d, seed);
    for (auto& w : model.weights_) w = read_le<double>(in, source);
    return model;
}

void EncoderModel::save(const std::filesystem::path& path) const {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError("cannot write " + path.string());
    save(out);
}

EncoderModel EncoderModel::load(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot open " + path.string());
    return load(in, path.string());
}

EmbeddingVector fallback_vector(std::size_t dim) {
    EmbeddingVector v(dim, 0.0);
    v[0] = 1.0;
    return v;
}

// ---------------------------------------------------------------------------
// Distance and loss

double dot(std::span<const double> a, std::span<const double> b) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
    return s;
}

double l2_norm(std::span<const double> v) { return std::sqrt(dot(v, v)); }

double cosine_distance(std::span<const double> u, std::span<const double> v) {
    if (u.size() != v.size()) throw NumericError("cosine_distance: dimension mismatch");
    const double nu = l2_norm(u);
    const double nv = l2_norm(v);
    if (nu == 0.0 || nv == 0.0) throw NumericError("cosine_distance: zero vector");
    const double c = std::clamp(dot(u, v) / (nu * nv), -1.0, 1.0);
    return 1.0 - c;
}

double margin_threshold(double mu) {
    if (!(mu >= 0.0 && mu <= 2.0)) {
        throw NumericError("margin mu=" + std::to_string(mu) + " outside [0, 2]");
    }
    return std::acos(1.0 - mu);
}

double multimargin_loss(double dist, int label, double mu) {
    const double theta = margin_threshold(mu);
    if (label == 1) {
        const double r = std::max(0.0, dist - theta);
        return r * r;
    }
    const double r = std::max(0.0, theta - dist);
    return r * r;
}

double Gradient::at(std::uint32_t r, std::size_t col) const {
    const auto it = std::lower_bound(rows.begin(), rows.end(), r);
    if (it == rows.end() || *it != r) return 0.0;
    return values[static_cast<std::size_t>(it - rows.begin()) * output_dim + col];
}

namespace {

struct Side {
    std::vector<double> unit;
    double norm = 0.0;  // 0 when the fallback vector stands in
};

Side normalized(const EncoderModel& model, const SparseFeatures& x) {
    Side s;
    s.unit = model.project(x);
    s.norm = l2_norm(s.unit);
    if (s.norm == 0.0) {
        s.unit = fallback_vector(model.output_dim());
    } else {
        for (auto& v : s.unit) v /= s.norm;
    }
    return s;
}

double distance_from_cos(double c, DistanceSpace space) {
    c = std::clamp(c, -1.0, 1.0);
    return space == DistanceSpace::cosine ? 1.0 - c : std::acos(c);
}

}  // namespace

double pair_distance(const EncoderModel& model, const SparseFeatures& q, const SparseFeatures& d,
                     DistanceSpace space) {
    const auto a = normalized(model, q);
    const auto b = normalized(model, d);
    return distance_from_cos(dot(a.unit, b.unit), space);
}

Gradient loss_gradient(const EncoderModel& model, std::span<const LossExample> batch,
                       DistanceSpace space) {
    if (batch.empty()) throw DataError("loss_gradient: empty batch");
    const std::size_t d = model.output_dim();
    const double scale = 1.0 / static_cast<double>(batch.size());

    Gradient grad;
    grad.output_dim = d;
    std::unordered_map<std::uint32_t, std::size_t> slot_of;
    std::vector<double> acc;
    const auto accumulate = [&](const SparseFeatures& x, const std::vector<double>& g) {
        for (std::size_t k = 0; k < x.size(); ++k) {
            auto [it, fresh] = slot_of.emplace(x.index[k], acc.size() / d);
            if (fresh) acc.resize(acc.size() + d, 0.0);
            double* dst = acc.data() + it->second * d;
            const double v = x.value[k];
            for (std::size_t j = 0; j < d; ++j) dst[j] += v * g[j];
        }
    };

    std::vector<double> gu(d), gv(d);
    for (const auto& ex : batch) {
        const auto q = normalized(model, *ex.query);
        const auto p = normalized(model, *ex.doc);
        const double c = std::clamp(dot(q.unit, p.unit), -1.0, 1.0);
        const double dist = distance_from_cos(c, space);
        const double theta = margin_threshold(ex.mu);

        double dloss_ddist = 0.0;
        if (ex.label == 1) {
            const double r = dist - theta;
            if (r > 0.0) {
                grad.loss += scale * r * r;
                dloss_ddist = 2.0 * r;
            }
        } else {
            const double r = theta - dist;
            if (r > 0.0) {
                grad.loss += scale * r * r;
                dloss_ddist = -2.0 * r;
            }
        }
        if (dloss_ddist == 0.0) continue;

        double ddist_dc = -1.0;
        if (space == DistanceSpace::angular) {
            const double s = std::sqrt(std::max(1e-24, 1.0 - c * c));
            ddist_dc = -1.0 / s;
        }
        const double dloss_dc = scale * dloss_ddist * ddist_dc;

        // d cos / d u = (v_hat - c u_hat) / |u|
        if (q.norm > 0.0) {
            for (std::size_t j = 0; j < d; ++j) gu[j] = dloss_dc * (p.unit[j] - c * q.unit[j]) / q.norm;
            accumulate(*ex.query, gu);
        }
        if (p.norm > 0.0) {
            for (std::size_t j = 0; j < d; ++j) gv[j] = dloss_dc * (q.unit[j] - c * p.unit[j]) / p.norm;
            accumulate(*ex.doc, gv);
        }
    }

    std::vector<std::pair<std::uint32_t, std::size_t>> order(slot_of.begin(), slot_of.end());
    std::sort(order.begin(), order.end());
    grad.rows.reserve(order.size());
    grad.values.reserve(order.size() * d);
    for (const auto& [r, slot] : order) {
        grad.rows.push_back(r);
        grad.values.insert(grad.values.end(), acc.begin() + static_cast<std::ptrdiff_t>(slot * d),
                           acc.begin() + static_cast<std::ptrdiff_t>((slot + 1) * d));
    }
    return grad;
}

// ---------------------------------------------------------------------------
// Training

const char* to_string(Optimizer optimizer) { return optimizer == Optimizer::sgd ? "sgd" : "adamw"; }

Optimizer parse_optimizer(std::string_view name) {
    if (name == "sgd") return Optimizer::sgd;
    if (name == "adamw") return Optimizer::adamw;
    throw ConfigError("unknown optimizer '" + std::string(name) + "'");
}

void TrainConfig::validate() const {
    if (batch_size < 1) throw ConfigError("train batch_size must be >= 1");
    if (!(learning_rate >= 0.0)) throw ConfigError("train learning_rate must be >= 0");
    if (!(warmup_fraction >= 0.0 && warmup_fraction < 1.0)) {
        throw ConfigError("train warmup_fraction must lie in [0, 1)");
    }
    if (!(weight_decay >= 0.0)) throw ConfigError("train weight_decay must be >= 0");
    if (!(learning_rate * weight_decay < 1.0)) throw ConfigError("train learning_rate * weight_decay must be < 1");
    if (!(beta1 >= 0.0 && beta1 < 1.0 && beta2 >= 0.0 && beta2 < 1.0)) {
        throw ConfigError("train betas must lie in [0, 1)");
    }
    if (!(epsilon > 0.0)) throw ConfigError("train epsilon must be > 0");
}

double learning_rate_at(const TrainConfig& config, std::size_t step, std::size_t total_steps) {
    if (total_steps == 0) return 0.0;
    const auto warmup = static_cast<std::size_t>(config.warmup_fraction * static_cast<double>(total_steps));
    if (step < warmup) {
        return config.learning_rate * static_cast<double>(step + 1) / static_cast<double>(warmup);
    }
    return config.learning_rate * static_cast<double>(total_steps - step) /
           static_cast<double>(total_steps - warmup);
}

TrainResult train(EncoderModel model, const std::vector<TrainingExample>& examples,
                  const TextLookup& texts, const TrainConfig& config) {
    config.validate();
    TrainResult result{std::move(model), {}, {}};
    EncoderModel& m = result.model;
    if (config.epochs == 0 || examples.empty()) return result;

    std::unordered_map<std::string, SparseFeatures> query_features;
    std::unordered_map<std::string, SparseFeatures> doc_features;
    for (const auto& ex : examples) {
        if (!query_features.count(ex.query_id)) {
            const auto it = texts.query_text.find(ex.query_id);
            if (it == texts.query_text.end()) throw DataError("no text for query " + ex.query_id);
            query_features.emplace(ex.query_id, m.features(it->second));
        }
        if (!doc_features.count(ex.doc_id)) {
            const auto it = texts.doc_text.find(ex.doc_id);
            if (it == texts.doc_text.end()) throw DataError("no text for document " + ex.doc_id);
            doc_features.emplace(ex.doc_id, m.features(it->second));
        }
    }

    const std::size_t batches_per_epoch =
        assemble_batches(examples, config.batch_size, derive_seed(config.seed, "epoch0")).size();
    const std::size_t total_steps = batches_per_epoch * config.epochs;
    const std::size_t d = m.output_dim();

    std::vector<double> first_moment;
    std::vector<double> second_moment;
    if (config.optimizer == Optimizer::adamw) {
        first_moment.assign(m.weights().size(), 0.0);
        second_moment.assign(m.weights().size(), 0.0);
    }

    std::size_t step = 0;
    std::vector<LossExample> batch_refs;
    for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
        const auto batches = assemble_batches(examples, config.batch_size,
                                              derive_seed(config.seed, "epoch" + std::to_string(epoch)));
        double epoch_total = 0.0;
        std::size_t epoch_count = 0;
        for (const auto& batch : batches) {
            batch_refs.clear();
            for (const auto& ex : batch) {
                batch_refs.push_back({&query_features.at(ex.query_id), &doc_features.at(ex.doc_id),
                                      ex.label, ex.mu});
            }
            const auto grad = loss_gradient(m, batch_refs, config.distance_space);
            if (!std::isfinite(grad.loss)) {
                throw NumericError("non-finite loss at epoch " + std::to_string(epoch) + " step " +
                                   std::to_string(step));
            }
            const double lr = learning_rate_at(config, step, total_steps);
            if (lr > 0.0 && config.optimizer == Optimizer::sgd) {
                if (config.weight_decay > 0.0) {
                    const double keep = 1.0 - lr * config.weight_decay;
                    for (auto& w : m.weights()) w *= keep;
                }
                for (std::size_t i = 0; i < grad.rows.size(); ++i) {
                    auto r = m.row(grad.rows[i]);
                    const auto g = grad.row(i);
                    for (std::size_t j = 0; j < d; ++j) r[j] -= lr * g[j];
                }
            } else if (lr > 0.0) {
                const double t = static_cast<double>(step + 1);
                const double c1 = 1.0 - std::pow(config.beta1, t);
                const double c2 = 1.0 - std::pow(config.beta2, t);
                const double keep = 1.0 - lr * config.weight_decay;
                for (std::size_t i = 0; i < grad.rows.size(); ++i) {
                    auto r = m.row(grad.rows[i]);
                    const auto g = grad.row(i);
                    double* m1 = first_moment.data() + static_cast<std::size_t>(grad.rows[i]) * d;
                    double* m2 = second_moment.data() + static_cast<std::size_t>(grad.rows[i]) * d;
                    for (std::size_t j = 0; j < d; ++j) {
                        m1[j] = config.beta1 * m1[j] + (1.0 - config.beta1) * g[j];
                        m2[j] = config.beta2 * m2[j] + (1.0 - config.beta2) * g[j] * g[j];
                        const double update = (m1[j] / c1) / (std::sqrt(m2[j] / c2) + config.epsilon);
                        r[j] = r[j] * keep - lr * update;
                    }
                }
            }
            result.trace.push_back({epoch, step, grad.loss, lr});
            epoch_total += grad.loss * static_cast<double>(batch.size());
            epoch_count += batch.size();
            ++step;
        }
        result.epoch_loss.push_back(epoch_total / static_cast<double>(epoch_count));
    }
    return result;
}

void write_loss_trace(std::ostream& out, const std::vector<TrainStep>& trace) {
    out << "epoch,step,loss,lr\n";
    char buf[128];
    for (const auto& s : trace) {
        std::snprintf(buf, sizeof(buf), "%zu,%zu,%.10g,%.10g\n", s.epoch, s.step, s.loss, s.learning_rate);
        out << buf;
    }
}

}  // namespace kbdr
