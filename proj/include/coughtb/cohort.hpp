#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <json.hpp>
#include <map>
#include <string>
#include <vector>

#include "coughtb/aggregation_fusion.hpp"
#include "coughtb/audio_io.hpp"
#include "coughtb/types.hpp"

namespace coughtb {

struct Participant {
  std::string participant_id;
  Group group = Group::TBpos;
  Demographics demographics;
  bool hiv_positive = false;
  Site site = Site::Synthetic;
  std::string recorded_at;  // "YYYY-MM-DDTHH"

  int recording_hour() const;
};

struct Recording {
  std::string participant_id;
  int session_index = 1;
  Device device = Device::HighFidelityMic;
  std::filesystem::path wav;         // absolute after loading; empty if embeddings-only
  std::filesystem::path embeddings;  // optional container holding this recording's segments

  std::string key() const;
};

inline constexpr int kManifestSchemaVersion = 1;

struct StudyManifest {
  int schema_version = kManifestSchemaVersion;
  std::vector<Participant> participants;
  std::vector<Recording> recordings;
  std::filesystem::path base_dir;

  const Participant& participant(const std::string& id) const;
  std::array<int, 3> group_totals() const;
};

// Validates the schema (errors carry the JSON field path), the participant
// invariants, unique ids, recording references and, when `check_files`,
// that every referenced file exists relative to base_dir.
StudyManifest parse_manifest(const nlohmann::json& j, const std::filesystem::path& base_dir,
                             bool check_files = true);
StudyManifest load_manifest(const std::filesystem::path& path);

// Paths are written relative to base_dir.
nlohmann::json to_json(const StudyManifest& m);
void write_manifest(const std::filesystem::path& path, const StudyManifest& m);

struct SimulationSpec {
  std::array<int, 3> group_sizes = {50, 40, 40};
  double effect_size = 2.0;
  double background_confound = 0.0;  // dB of group-linked background tilt per unit
  std::uint64_t seed = 1;
  int sessions = 3;
  int min_coughs = 2;
  int max_coughs = 3;
  bool include_phone = true;

  void validate() const;
};

nlohmann::json to_json(const SimulationSpec& s);
SimulationSpec simulation_spec_from_json(const nlohmann::json& j);

// Participants and recordings of a simulated cohort, without audio. WAV paths
// follow "<wav_dir>/<recording key>.wav".
StudyManifest simulate_manifest(const SimulationSpec& spec, const std::filesystem::path& wav_dir = "wav");

// The PCM16-quantised audio for one simulated recording; a pure function of
// (spec, participant, recording).
AudioClip synthesize_recording(const SimulationSpec& spec, const Participant& participant, const Recording& recording);

// Writes every WAV plus manifest.json under out_dir and returns the manifest.
StudyManifest simulate_cohort(const SimulationSpec& spec, const std::filesystem::path& out_dir, int jobs = 1);

class RecordingSource {
 public:
  virtual ~RecordingSource() = default;
  virtual AudioClip load(const Participant& participant, const Recording& recording) const = 0;
};

class WavRecordingSource final : public RecordingSource {
 public:
  AudioClip load(const Participant& participant, const Recording& recording) const override;
};

// Generates recordings in memory; identical to reading the WAVs written by simulate_cohort.
class SimulatedRecordingSource final : public RecordingSource {
 public:
  explicit SimulatedRecordingSource(SimulationSpec spec) : spec_(spec) {}
  AudioClip load(const Participant& participant, const Recording& recording) const override;

 private:
  SimulationSpec spec_;
};

}  // namespace coughtb
