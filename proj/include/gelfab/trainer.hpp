#pragma once

// Group sampling, the batch training loop and checkpoint persistence.

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "gelfab/assocnet.hpp"
#include "gelfab/dataplane.hpp"
#include "gelfab/rng.hpp"

namespace gelfab {

struct TrainConfig {
  double learning_rate = 0.001;
  std::uint32_t batch_size = 32;
  std::uint32_t iterations = 2000;
  double margin = 2.0;
  double negative_ratio = 0.5;
  double aux_weight = 1.0;
  std::uint64_t master_seed = 1;

  /// Throws std::invalid_argument on non-positive values or a ratio outside (0, 1).
  void validate() const;
  /// Negatives per batch: round(batch_size * negative_ratio).
  std::uint32_t negatives_per_batch() const;

  bool operator==(const TrainConfig&) const = default;
};

// Draws training groups for one model layout from a pool of fabrics.
class GroupSampler {
 public:
  /// `allowed` (optional, one flag per dataset observation) restricts the
  /// usable observations, e.g. to an instance-level training subset.
  GroupSampler(const Dataset& ds, const JointModel& model, std::vector<int> fabric_ids,
               const std::vector<bool>* allowed = nullptr);

  /// y = 0: one fabric for every branch. y = 1: per-branch fabrics drawn
  /// independently, redrawn until not all equal.
  TripletGroup sample(Rng& rng, int y) const;

  const std::vector<int>& fabric_ids() const { return fabric_ids_; }

 private:
  const Observation* pick(Rng& rng, int fabric, std::size_t branch) const;
  std::vector<const Observation*> pick_presses(Rng& rng, int fabric, std::size_t branch) const;

  const Dataset* ds_;
  std::vector<Modality> modalities_;
  std::vector<std::size_t> presses_;
  std::vector<int> fabric_ids_;
  std::map<int, int> cluster_of_;
  std::map<std::pair<int, Modality>, std::vector<const Observation*>> pool_;
};

/// Label drawn with P(y = 1) = negative_ratio, then a group for that label.
TripletGroup sample_group(const GroupSampler& sampler, Rng& rng, double negative_ratio);

/// One batch: negatives_per_batch() negative groups first, then positives.
std::vector<TripletGroup> make_batch(const GroupSampler& sampler, Rng& rng, const TrainConfig& config);

struct TrainResult {
  JointModel model;
  std::vector<double> loss_history;  // mean batch loss per iteration
};

/// Mean-gradient Adam training; throws NumericError on a non-finite loss.
TrainResult train(JointModel model, const GroupSampler& sampler, const TrainConfig& config);

/// Trains on the dataset's training fabrics.
TrainResult train(JointModel model, const Dataset& ds, const TrainConfig& config);

struct Checkpoint {
  JointModel model;
  TrainConfig config;

  bool operator==(const Checkpoint&) const = default;
};

inline constexpr std::uint32_t kCheckpointVersion = 1;

/// "GFAB" checkpoint; reals are 32-bit little-endian floats.
std::string encode_checkpoint(const JointModel& model, const TrainConfig& config);
Checkpoint decode_checkpoint(std::string_view bytes);
void save_checkpoint(const JointModel& model, const TrainConfig& config, const std::string& path);
Checkpoint load_checkpoint(const std::string& path);

/// "iteration,loss" rows after the given comment lines.
std::string loss_history_csv(const std::vector<double>& history,
                             const std::vector<std::string>& comment_lines = {});

}  // namespace gelfab
