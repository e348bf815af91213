#include "fedol/data.hpp"

#include <algorithm>
#include <cmath>
#include <istream>
#include <numeric>
#include <ostream>
#include <string>

#include "fedol/errors.hpp"
#include "fedol/io.hpp"
#include "fedol/mlp.hpp"
#include "fedol/rng.hpp"

namespace fedol {

namespace {

std::vector<std::vector<std::size_t>> group_by_class(const std::vector<std::size_t>& labels,
                                                     std::size_t num_classes) {
  std::vector<std::vector<std::size_t>> by_class(num_classes);
  for (std::size_t i = 0; i < labels.size(); ++i) {
    by_class[labels[i]].push_back(i);
  }
  return by_class;
}

// Integer counts matching proportions p over n items, largest-remainder rule.
std::vector<std::size_t> largest_remainder_counts(const std::vector<double>& p, std::size_t n) {
  const std::size_t k = p.size();
  std::vector<std::size_t> counts(k);
  std::vector<std::pair<double, std::size_t>> frac(k);
  std::size_t assigned = 0;
  for (std::size_t i = 0; i < k; ++i) {
    const double exact = p[i] * static_cast<double>(n);
    counts[i] = static_cast<std::size_t>(std::floor(exact));
    frac[i] = {exact - std::floor(exact), i};
    assigned += counts[i];
  }
  std::sort(frac.begin(), frac.end(), [](const auto& a, const auto& b) {
    if (a.first != b.first) return a.first > b.first;
    return a.second < b.second;
  });
  for (std::size_t r = 0; assigned < n; ++r, ++assigned) {
    counts[frac[r % k].second]++;
  }
  return counts;
}

// Dir(0.05) regularly leaves clients empty at desk scale; every client must
// end up with at least one sample so it can train.
void repair_empty_shards(std::vector<std::vector<std::size_t>>& shards) {
  for (auto& shard : shards) {
    if (!shard.empty()) continue;
    std::size_t largest = 0;
    for (std::size_t k = 1; k < shards.size(); ++k) {
      if (shards[k].size() > shards[largest].size()) largest = k;
    }
    if (shards[largest].size() < 2) break;
    shard.push_back(shards[largest].back());
    shards[largest].pop_back();
  }
}

}  // namespace

Dataset make_synthetic(std::size_t classes, std::size_t dims, std::size_t per_class,
                       double separation, std::uint64_t seed) {
  if (classes < 2 || dims < 2 || per_class < 1) {
    throw PreconditionError("make_synthetic: need classes >= 2, dims >= 2, per_class >= 1");
  }
  if (!(separation >= 0.0)) {
    throw PreconditionError("make_synthetic: separation must be nonnegative");
  }
  Rng rng(seed);
  Matrix centers(classes, dims);
  for (std::size_t c = 0; c < classes; ++c) {
    auto row = centers.row(c);
    double norm2 = 0.0;
    for (double& v : row) {
      v = rng.gaussian();
      norm2 += v * v;
    }
    if (norm2 == 0.0) {
      row[0] = 1.0;
      norm2 = 1.0;
    }
    const double scale = separation / std::sqrt(norm2);
    for (double& v : row) v *= scale;
  }

  Dataset ds;
  ds.num_classes = classes;
  ds.features = Matrix(classes * per_class, dims);
  ds.labels.resize(classes * per_class);
  for (std::size_t c = 0; c < classes; ++c) {
    auto center = centers.row(c);
    for (std::size_t i = 0; i < per_class; ++i) {
      const std::size_t r = c * per_class + i;
      auto row = ds.features.row(r);
      for (std::size_t j = 0; j < dims; ++j) row[j] = center[j] + rng.gaussian();
      ds.labels[r] = c;
    }
  }
  return ds;
}

std::pair<Dataset, Dataset> split_labeled(const Dataset& ds, std::size_t count,
                                          std::uint64_t seed) {
  if (count > ds.size()) {
    throw PreconditionError("split_labeled: count exceeds dataset size");
  }
  Rng rng(seed);
  std::vector<std::size_t> perm = rng.permutation(ds.size());
  std::vector<std::size_t> picked(perm.begin(), perm.begin() + count);
  std::vector<std::size_t> rest(perm.begin() + count, perm.end());
  std::sort(picked.begin(), picked.end());
  std::sort(rest.begin(), rest.end());
  return {subset(ds, picked), subset(ds, rest)};
}

PublicSplit split_public(const Dataset& ds, std::size_t public_count, std::uint64_t seed) {
  if (public_count >= ds.size()) {
    throw PreconditionError("split_public: public_count must be < dataset size");
  }
  auto [pub, priv] = split_labeled(ds, public_count, seed);
  return {std::move(pub.features), std::move(priv)};
}

std::vector<std::vector<std::size_t>> partition_indices_dirichlet(
    const std::vector<std::size_t>& labels, std::size_t num_classes, std::size_t num_clients,
    double alpha, std::uint64_t seed) {
  if (labels.empty()) throw PreconditionError("partition_dirichlet: empty dataset");
  if (num_clients < 1) throw PreconditionError("partition_dirichlet: need >= 1 client");
  if (!(alpha > 0.0)) throw PreconditionError("partition_dirichlet: alpha must be > 0");

  Rng rng(seed);
  auto by_class = group_by_class(labels, num_classes);
  std::vector<std::vector<std::size_t>> shards(num_clients);
  for (std::size_t c = 0; c < num_classes; ++c) {
    auto& idx = by_class[c];
    if (idx.empty()) continue;
    rng.shuffle(idx);
    const std::vector<double> p = rng.dirichlet(alpha, num_clients);
    const std::vector<std::size_t> counts = largest_remainder_counts(p, idx.size());
    std::size_t pos = 0;
    for (std::size_t k = 0; k < num_clients; ++k) {
      for (std::size_t i = 0; i < counts[k]; ++i) shards[k].push_back(idx[pos++]);
    }
  }
  repair_empty_shards(shards);
  return shards;
}

std::vector<std::vector<std::size_t>> partition_indices_pathological(
    const std::vector<std::size_t>& labels, std::size_t num_classes, std::size_t num_clients,
    std::size_t classes_per_client, std::uint64_t seed) {
  if (labels.empty()) throw PreconditionError("partition_pathological: empty dataset");
  if (classes_per_client < 1 || classes_per_client > num_classes) {
    throw PreconditionError("partition_pathological: classes_per_client out of range");
  }
  if (num_clients * classes_per_client < num_classes) {
    throw InfeasiblePartitionError(
        "partition_pathological: num_clients * classes_per_client < num_classes leaves "
        "classes unassigned");
  }

  Rng rng(seed);
  auto by_class = group_by_class(labels, num_classes);
  for (auto& idx : by_class) rng.shuffle(idx);

  // Cyclic walk over a seeded class order: client k holds I_c consecutive
  // entries, so each class lands on floor or ceil of K*I_c/C clients.
  const std::vector<std::size_t> order = rng.permutation(num_classes);
  std::vector<std::vector<std::size_t>> holders(num_classes);
  for (std::size_t k = 0; k < num_clients; ++k) {
    for (std::size_t j = 0; j < classes_per_client; ++j) {
      const std::size_t c = order[(k * classes_per_client + j) % num_classes];
      holders[c].push_back(k);
    }
  }

  std::vector<std::vector<std::size_t>> shards(num_clients);
  for (std::size_t c = 0; c < num_classes; ++c) {
    const auto& idx = by_class[c];
    const auto& h = holders[c];
    if (idx.empty() || h.empty()) continue;
    const std::size_t base = idx.size() / h.size();
    const std::size_t rem = idx.size() % h.size();
    std::size_t pos = 0;
    for (std::size_t i = 0; i < h.size(); ++i) {
      const std::size_t take = base + (i < rem ? 1 : 0);
      for (std::size_t t = 0; t < take; ++t) shards[h[i]].push_back(idx[pos++]);
    }
  }
  return shards;
}

std::vector<Dataset> partition_dirichlet(const Dataset& ds, std::size_t num_clients,
                                         double alpha, std::uint64_t seed) {
  auto idx = partition_indices_dirichlet(ds.labels, ds.num_classes, num_clients, alpha, seed);
  std::vector<Dataset> shards;
  shards.reserve(idx.size());
  for (const auto& s : idx) shards.push_back(subset(ds, s));
  return shards;
}

std::vector<Dataset> partition_pathological(const Dataset& ds, std::size_t num_clients,
                                            std::size_t classes_per_client, std::uint64_t seed) {
  auto idx = partition_indices_pathological(ds.labels, ds.num_classes, num_clients,
                                            classes_per_client, seed);
  std::vector<Dataset> shards;
  shards.reserve(idx.size());
  for (const auto& s : idx) shards.push_back(subset(ds, s));
  return shards;
}

std::vector<Dataset> partition(const Dataset& ds, const PartitionSpec& spec) {
  if (spec.scheme == PartitionSpec::Scheme::dirichlet) {
    return partition_dirichlet(ds, spec.num_clients, spec.alpha, spec.seed);
  }
  return partition_pathological(ds, spec.num_clients, spec.classes_per_client, spec.seed);
}

Dataset subset(const Dataset& ds, const std::vector<std::size_t>& idx) {
  Dataset out;
  out.num_classes = ds.num_classes;
  out.features = gather_rows(ds.features, idx);
  out.labels.reserve(idx.size());
  for (std::size_t i : idx) out.labels.push_back(ds.labels[i]);
  return out;
}

void write_dataset_csv(const Dataset& ds, std::ostream& out) {
  for (std::size_t j = 0; j < ds.dims(); ++j) out << 'f' << j << ',';
  out << "label\n";
  for (std::size_t i = 0; i < ds.size(); ++i) {
    auto row = ds.features.row(i);
    for (double v : row) out << format_double(v) << ',';
    out << ds.labels[i] << '\n';
  }
}

Dataset read_dataset_csv(std::istream& in, std::size_t num_classes) {
  std::string line;
  if (!std::getline(in, line)) throw ConfigError("dataset csv: missing header");
  const auto header = split_csv_line(line);
  if (header.empty() || header.back() != "label") {
    throw ConfigError("dataset csv: header must end with 'label'");
  }
  const std::size_t dims = header.size() - 1;

  std::vector<double> values;
  std::vector<std::size_t> labels;
  while (std::getline(in, line)) {
    if (trim(line).empty()) continue;
    const auto fields = split_csv_line(line);
    if (fields.size() != dims + 1) throw ConfigError("dataset csv: bad row width");
    for (std::size_t j = 0; j < dims; ++j) values.push_back(parse_double(fields[j]));
    const long long label = parse_int(fields[dims]);
    if (label < 0 || static_cast<std::size_t>(label) >= num_classes) {
      throw ConfigError("dataset csv: label out of range");
    }
    labels.push_back(static_cast<std::size_t>(label));
  }

  Dataset ds;
  ds.num_classes = num_classes;
  ds.features = Matrix(labels.size(), dims);
  std::copy(values.begin(), values.end(), ds.features.data().begin());
  ds.labels = std::move(labels);
  return ds;
}

void write_features_csv(const Matrix& features, std::ostream& out) {
  for (std::size_t j = 0; j < features.cols(); ++j) {
    out << 'f' << j << (j + 1 < features.cols() ? ',' : '\n');
  }
  for (std::size_t i = 0; i < features.rows(); ++i) {
    auto row = features.row(i);
    for (std::size_t j = 0; j < row.size(); ++j) {
      out << format_double(row[j]) << (j + 1 < row.size() ? ',' : '\n');
    }
  }
}

Matrix read_features_csv(std::istream& in) {
  std::string line;
  if (!std::getline(in, line)) throw ConfigError("features csv: missing header");
  const std::size_t dims = split_csv_line(line).size();

  std::vector<double> values;
  std::size_t rows = 0;
  while (std::getline(in, line)) {
    if (trim(line).empty()) continue;
    const auto fields = split_csv_line(line);
    if (fields.size() != dims) throw ConfigError("features csv: bad row width");
    for (const auto& f : fields) values.push_back(parse_double(f));
    ++rows;
  }
  Matrix m(rows, dims);
  std::copy(values.begin(), values.end(), m.data().begin());
  return m;
}

}  // namespace fedol
