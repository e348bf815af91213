#include "fedol/client.hpp"

#include <istream>
#include <ostream>
#include <string>

#include "fedol/errors.hpp"
#include "fedol/io.hpp"
#include "fedol/prob.hpp"
#include "fedol/rng.hpp"

namespace fedol {

MlpModel local_train(const ClientSpec& spec, const Dataset& shard) {
  if (shard.size() == 0) throw PreconditionError("local_train: empty shard");
  MlpModel model =
      init_mlp(spec.arch, Activation::relu, mix_seed(spec.train.seed, "client-init"));
  const Matrix labels = one_hot(shard.labels, model.num_classes());
  return train_supervised(std::move(model), shard.features, labels, spec.train);
}

PredictionUpload predict_public(std::size_t client_id, const MlpModel& model,
                                const Matrix& public_features) {
  if (public_features.rows() == 0) {
    throw PreconditionError("predict_public: empty public pool");
  }
  Matrix probs = forward(model, public_features);
  softmax_rows(probs);
  return {client_id, std::move(probs)};
}

void write_upload_csv(const PredictionUpload& upload, std::ostream& out) {
  out << "# client " << upload.client_id << '\n';
  for (std::size_t i = 0; i < upload.probs.rows(); ++i) {
    auto row = upload.probs.row(i);
    for (std::size_t c = 0; c < row.size(); ++c) {
      out << format_double(row[c]) << (c + 1 < row.size() ? ',' : '\n');
    }
  }
}

PredictionUpload read_upload_csv(std::istream& in) {
  std::string line;
  if (!std::getline(in, line)) throw ConfigError("upload csv: empty stream");
  const std::string_view header = trim(line);
  constexpr std::string_view prefix = "# client ";
  if (!header.starts_with(prefix)) {
    throw ConfigError("upload csv: missing '# client <id>' header");
  }
  PredictionUpload upload;
  upload.client_id = static_cast<std::size_t>(parse_int(header.substr(prefix.size())));

  std::vector<double> values;
  std::size_t rows = 0;
  std::size_t cols = 0;
  while (std::getline(in, line)) {
    if (trim(line).empty()) continue;
    const auto fields = split_csv_line(line);
    if (cols == 0) cols = fields.size();
    if (fields.size() != cols) throw ConfigError("upload csv: bad row width");
    for (const auto& f : fields) values.push_back(parse_double(f));
    ++rows;
  }
  upload.probs = Matrix(rows, cols);
  std::copy(values.begin(), values.end(), upload.probs.data().begin());
  return upload;
}

}  // namespace fedol
