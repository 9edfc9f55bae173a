#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "softnet/masked_network.hpp"
#include "softnet/protocol.hpp"

namespace softnet {

struct LossRecord {
  std::string phase;  // "base" or "incremental"
  std::size_t session = 1;
  std::size_t epoch = 0;
  double loss = 0.0;
};

/// Everything a protocol run carries from one session to the next.
struct TrainedState {
  MaskedMlp network;
  PrototypeStore prototypes;
  ExemplarStore exemplars;
  std::vector<LossRecord> trace;
  std::vector<int> base_classes;
  std::size_t sessions_completed = 0;
};

/// `phase,session,epoch,loss`
std::string loss_trace_csv(const std::vector<LossRecord>& trace);

}  // namespace softnet
