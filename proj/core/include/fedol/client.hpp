#pragma once

#include <cstdint>
#include <iosfwd>
#include <vector>

#include "fedol/data.hpp"
#include "fedol/matrix.hpp"
#include "fedol/mlp.hpp"

namespace fedol {

// Client k's architecture and training knobs. `arch` is the full layer-size
// list; clients may differ in everything except the final width.
struct ClientSpec {
  std::size_t id = 0;
  std::vector<std::size_t> arch;
  TrainConfig train;
};

// The system's only client-to-server message: softmax predictions over the
// public pool, one row per public sample.
struct PredictionUpload {
  std::size_t client_id = 0;
  Matrix probs;
};

// Trains the local model once on the private shard. The client does nothing
// else for the rest of the protocol.
MlpModel local_train(const ClientSpec& spec, const Dataset& shard);

PredictionUpload predict_public(std::size_t client_id, const MlpModel& model,
                                const Matrix& public_features);

// CSV wire format: "# client <id>" comment, then N_u rows of C probabilities.
void write_upload_csv(const PredictionUpload& upload, std::ostream& out);
PredictionUpload read_upload_csv(std::istream& in);

}  // namespace fedol
