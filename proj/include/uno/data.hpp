#pragma once

#include "uno/params.hpp"

#include <cstdint>
#include <filesystem>
#include <random>
#include <set>
#include <span>
#include <vector>

namespace uno {

struct LabeledDataset {
  Mat images;  // n x input_dim, pixels in [0,1]
  std::vector<int> labels;

  std::size_t size() const { return labels.size(); }
};

// Reads an IDX image/label pair (magics 0x803 / 0x801, big-endian dims).
// Throws BadMagic, CountMismatch, TruncatedFile, Io.
LabeledDataset load_idx(const std::filesystem::path& images_path, const std::filesystem::path& labels_path);

// Writes pixels as round(255 * x). Mostly useful for fixtures.
void write_idx(const LabeledDataset& data, int rows, int cols, const std::filesystem::path& images_path,
               const std::filesystem::path& labels_path);

struct Partition {
  std::vector<std::size_t> retain;
  std::vector<std::size_t> forget;
  std::set<int> forget_labels;
};

// Throws EmptyForgetSet / EmptyRetainSet.
Partition partition_by_label(const LabeledDataset& data, const std::set<int>& forget_labels);

LabeledDataset select(const LabeledDataset& data, std::span<const std::size_t> indices);
Mat select_rows(const Mat& m, std::span<const std::size_t> indices);

// First n samples after a seeded shuffle (all of them if n >= size).
LabeledDataset seeded_subset(const LabeledDataset& data, std::size_t n, std::uint64_t seed);

// Cycles through shuffled epochs of a row set. The final batch of an epoch is
// truncated rather than dropped; the next epoch reshuffles with the same RNG.
class BatchStream {
 public:
  BatchStream(const Mat& rows, std::uint64_t seed);

  std::vector<std::size_t> next_indices(std::size_t batch);
  Mat next_batch(std::size_t batch);

  std::size_t epoch() const { return epoch_; }
  std::size_t cursor() const { return cursor_; }
  const std::vector<std::size_t>& permutation() const { return perm_; }

 private:
  void reshuffle();

  const Mat* rows_;
  std::mt19937_64 rng_;
  std::vector<std::size_t> perm_;
  std::size_t cursor_ = 0;
  std::size_t epoch_ = 0;
};

}  // namespace uno
