#include "kbdr/vindex.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <istream>
#include <ostream>

#include "kbdr/error.hpp"

namespace kbdr {

namespace {

constexpr char index_magic[8] = {'K', 'B', 'D', 'R', 'V', 'I', 'X', '\0'};
constexpr std::uint32_t index_version = 1;

template <typename T>
void put(std::ostream& out, T value) {
    unsigned char bytes[sizeof(T)];
    std::memcpy(bytes, &value, sizeof(T));
    if constexpr (std::endian::native == std::endian::big) std::reverse(bytes, bytes + sizeof(T));
    out.write(reinterpret_cast<const char*>(bytes), sizeof(T));
}

template <typename T>
T get(std::istream& in, const std::string& source) {
    unsigned char bytes[sizeof(T)];
    if (!in.read(reinterpret_cast<char*>(bytes), sizeof(T))) throw DataError(source + ": truncated index");
    if constexpr (std::endian::native == std::endian::big) std::reverse(bytes, bytes + sizeof(T));
    T value;
    std::memcpy(&value, bytes, sizeof(T));
    return value;
}

}  // namespace

void VectorIndex::add(std::string doc_id, std::span<const double> vector) {
    if (vector.size() != dim_) throw NumericError("index row has wrong dimension");
    if (std::abs(l2_norm(vector) - 1.0) > 1e-6) throw NumericError("index row for " + doc_id + " is not unit-norm");
    doc_ids_.push_back(std::move(doc_id));
    data_.insert(data_.end(), vector.begin(), vector.end());
}

RankedList VectorIndex::search(std::span<const double> query, std::size_t k) const {
    if (query.size() != dim_) {
        throw DataError("query dimension " + std::to_string(query.size()) + " does not match index dimension " +
                        std::to_string(dim_));
    }
    if (k == 0) throw ConfigError("index search: k must be >= 1");
    const double qn = l2_norm(query);
    if (qn == 0.0) throw NumericError("index search: zero query vector");

    RankedList all;
    all.reserve(size());
    for (std::size_t r = 0; r < size(); ++r) all.push_back({doc_ids_[r], dot(row(r), query) / qn});
    const auto better = [](const ScoredDoc& a, const ScoredDoc& b) {
        if (a.score != b.score) return a.score > b.score;
        return a.doc_id < b.doc_id;
    };
    const std::size_t keep = std::min(k, all.size());
    std::partial_sort(all.begin(), all.begin() + static_cast<std::ptrdiff_t>(keep), all.end(), better);
    all.resize(keep);
    return all;
}

void VectorIndex::save(std::ostream& out) const {
    out.write(index_magic, sizeof(index_magic));
    put<std::uint32_t>(out, index_version);
    put<std::uint32_t>(out, 0);
    put<std::uint64_t>(out, size());
    put<std::uint64_t>(out, dim_);
    for (const auto& id : doc_ids_) {
        put<std::uint32_t>(out, static_cast<std::uint32_t>(id.size()));
        out.write(id.data(), static_cast<std::streamsize>(id.size()));
    }
    for (double v : data_) put<double>(out, v);
}

VectorIndex VectorIndex::load(std::istream& in, const std::string& source) {
    char magic[sizeof(index_magic)];
    if (!in.read(magic, sizeof(magic)) || std::memcmp(magic, index_magic, sizeof(magic)) != 0) {
        throw DataError(source + ": not a vector index");
    }
    if (get<std::uint32_t>(in, source) != index_version) throw DataError(source + ": unsupported index version");
    get<std::uint32_t>(in, source);
    const auto n = get<std::uint64_t>(in, source);
    const auto dim = get<std::uint64_t>(in, source);
    if (dim == 0 || dim > 4096) throw DataError(source + ": bad dimension");
    VectorIndex index(dim);
    for (std::uint64_t i = 0; i < n; ++i) {
        const auto len = get<std::uint32_t>(in, source);
        std::string id(len, '\0');
        if (!in.read(id.data(), len)) throw DataError(source + ": truncated index");
        index.doc_ids_.push_back(std::move(id));
    }
    index.data_.resize(n * dim);
    for (auto& v : index.data_) v = get<double>(in, source);
    return index;
}

void VectorIndex::save(const std::filesystem::path& path) const {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError("cannot write " + path.string());
    save(out);
}

VectorIndex VectorIndex::load(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot open " + path.string());
    return load(in, path.string());
}

VectorIndex index_build(const EncoderModel& model, const Corpus& corpus) {
    VectorIndex index(model.output_dim());
    corpus.for_each([&](const Document& doc, const TokenizedText&) {
        index.add(doc.doc_id, model.encode(dense_text(doc)));
    });
    return index;
}

RankedList index_search(const VectorIndex& index, std::span<const double> query, std::size_t k) {
    return index.search(query, k);
}

}  // namespace kbdr
