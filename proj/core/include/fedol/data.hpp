#pragma once

#include <cstdint>
#include <iosfwd>
#include <vector>

#include "fedol/matrix.hpp"

namespace fedol {

struct Dataset {
  Matrix features;                  // N x d
  std::vector<std::size_t> labels;  // class indices in [0, num_classes)
  std::size_t num_classes = 0;

  std::size_t size() const { return features.rows(); }
  std::size_t dims() const { return features.cols(); }
};

struct PartitionSpec {
  enum class Scheme { dirichlet, pathological };
  Scheme scheme = Scheme::dirichlet;
  double alpha = 1.0;                   // dirichlet concentration
  std::size_t classes_per_client = 2;   // pathological I_c
  std::size_t num_clients = 10;
  std::uint64_t seed = 0;
};

// Gaussian blobs: class centers on a seeded random sphere of radius
// `separation`, unit-variance isotropic noise around each center.
Dataset make_synthetic(std::size_t classes, std::size_t dims, std::size_t per_class,
                       double separation, std::uint64_t seed);

// Seeded sample of `count` rows without replacement. Returns (sampled with
// labels, remainder with labels).
std::pair<Dataset, Dataset> split_labeled(const Dataset& ds, std::size_t count,
                                          std::uint64_t seed);

struct PublicSplit {
  Matrix public_features;  // labels removed
  Dataset private_set;
};
PublicSplit split_public(const Dataset& ds, std::size_t public_count, std::uint64_t seed);

// Index-level partitions; shards are disjoint and union to 0..N-1.
std::vector<std::vector<std::size_t>> partition_indices_dirichlet(
    const std::vector<std::size_t>& labels, std::size_t num_classes, std::size_t num_clients,
    double alpha, std::uint64_t seed);
std::vector<std::vector<std::size_t>> partition_indices_pathological(
    const std::vector<std::size_t>& labels, std::size_t num_classes, std::size_t num_clients,
    std::size_t classes_per_client, std::uint64_t seed);

std::vector<Dataset> partition_dirichlet(const Dataset& ds, std::size_t num_clients,
                                         double alpha, std::uint64_t seed);
std::vector<Dataset> partition_pathological(const Dataset& ds, std::size_t num_clients,
                                            std::size_t classes_per_client, std::uint64_t seed);
std::vector<Dataset> partition(const Dataset& ds, const PartitionSpec& spec);

Dataset subset(const Dataset& ds, const std::vector<std::size_t>& idx);

// CSV fixtures: header f0,...,f{d-1},label; feature-only variant omits the
// label column.
void write_dataset_csv(const Dataset& ds, std::ostream& out);
Dataset read_dataset_csv(std::istream& in, std::size_t num_classes);
void write_features_csv(const Matrix& features, std::ostream& out);
Matrix read_features_csv(std::istream& in);

}  // namespace fedol
