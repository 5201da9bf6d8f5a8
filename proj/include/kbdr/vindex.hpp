#pragma once

#include <filesystem>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "kbdr/encoder.hpp"
#include "kbdr/kbdata.hpp"
#include "kbdr/lexical.hpp"

namespace kbdr {

/// Exact flat index of unit-norm document embeddings, rows in doc_id order.
class VectorIndex {
public:
    VectorIndex() = default;
    explicit VectorIndex(std::size_t dim) : dim_(dim) {}

    /// Appends a row; throws NumericError unless it is unit-norm within 1e-6.
    void add(std::string doc_id, std::span<const double> vector);

    std::size_t size() const { return doc_ids_.size(); }
    std::size_t dim() const { return dim_; }
    const std::string& doc_id(std::size_t row) const { return doc_ids_[row]; }
    std::span<const double> row(std::size_t r) const { return {data_.data() + r * dim_, dim_}; }

    /// Top-k rows by cosine similarity (descending, ties by doc_id).
    RankedList search(std::span<const double> query, std::size_t k) const;

    void save(std::ostream& out) const;
    static VectorIndex load(std::istream& in, const std::string& source = "<index>");
    void save(const std::filesystem::path& path) const;
    static VectorIndex load(const std::filesystem::path& path);

    bool operator==(const VectorIndex&) const = default;

private:
    std::size_t dim_ = 0;
    std::vector<std::string> doc_ids_;
    std::vector<double> data_;
};

/// Encodes `dense_text` of every document in doc_id order.
VectorIndex index_build(const EncoderModel& model, const Corpus& corpus);

RankedList index_search(const VectorIndex& index, std::span<const double> query, std::size_t k);

}  // namespace kbdr
