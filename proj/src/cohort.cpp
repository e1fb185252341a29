#include "coughtb/cohort.hpp"

#include <cmath>
#include <complex>
#include <fstream>
#include <numbers>
#include <numeric>
#include <random>
#include <set>
#include <unsupported/Eigen/FFT>

#include "coughtb/cough_segmenter.hpp"
#include "coughtb/errors.hpp"
#include "coughtb/util.hpp"

namespace coughtb {
namespace {

using nlohmann::json;

std::string_view device_token(Device d) {
  switch (d) {
    case Device::HighFidelityMic: return "mic";
    case Device::Smartphone: return "phone";
    case Device::Synthetic: return "synthetic";
  }
  return "?";
}

template <typename T>
T field(const json& obj, const std::string& key, const std::string& path) {
  const auto it = obj.find(key);
  if (it == obj.end()) throw SchemaError(path + "." + key, "missing required field");
  try {
    return it->get<T>();
  } catch (const json::exception&) {
    throw SchemaError(path + "." + key, "wrong type");
  }
}

template <typename Fn>
auto parse_enum(const json& obj, const std::string& key, const std::string& path, Fn&& parse) {
  const auto text = field<std::string>(obj, key, path);
  try {
    return parse(text);
  } catch (const InvalidArgument& e) {
    throw SchemaError(path + "." + key, e.what());
  }
}

bool valid_timestamp(const std::string& s) {
  if (s.size() != 13 || s[4] != '-' || s[7] != '-' || s[10] != 'T') return false;
  for (std::size_t i : {0, 1, 2, 3, 5, 6, 8, 9, 11, 12}) {
    if (s[i] < '0' || s[i] > '9') return false;
  }
  const int hour = std::stoi(s.substr(11, 2));
  return hour >= 0 && hour <= 23;
}

Participant parse_participant(const json& p, const std::string& path) {
  if (!p.is_object()) throw SchemaError(path, "expected an object");
  Participant out;
  out.participant_id = field<std::string>(p, "participant_id", path);
  if (out.participant_id.empty()) throw SchemaError(path + ".participant_id", "must not be empty");
  out.group = parse_enum(p, "group", path, parse_group);
  out.demographics.gender = parse_enum(p, "gender", path, parse_gender);
  const double age = field<double>(p, "age_years", path);
  if (age != std::floor(age)) throw SchemaError(path + ".age_years", "must be an integer");
  out.demographics.age_years = static_cast<int>(age);
  out.demographics.bmi = field<double>(p, "bmi", path);
  out.demographics.symptom_present = field<bool>(p, "symptom_present", path);
  out.hiv_positive = field<bool>(p, "hiv_positive", path);
  out.site = parse_enum(p, "site", path, parse_site);
  out.recorded_at = field<std::string>(p, "recorded_at", path);
  if (!valid_timestamp(out.recorded_at)) throw SchemaError(path + ".recorded_at", "expected YYYY-MM-DDTHH");

  for (const auto& issue : validate_demographics(out.demographics)) {
    throw SchemaError(path + "." + issue.field, issue.message);
  }
  if (out.group == Group::HC && out.demographics.symptom_present) {
    throw InvariantViolation("hc_asymptomatic", path + ": healthy control marked symptomatic");
  }
  if (out.group != Group::HC && !out.demographics.symptom_present) {
    throw InvariantViolation("symptomatic_groups", path + ": TB+/OR participant marked asymptomatic");
  }
  return out;
}

// ---- synthesis -------------------------------------------------------------

constexpr double kRate = kCanonicalRate;

struct Traits {
  double tb_structure;   // scales the TB spectral profile
  double or_structure;   // scales the OR spectral profile
  double tilt_db_oct;    // group-independent nuisance tilt
  double level;          // cough peak amplitude
};

Traits participant_traits(const SimulationSpec& spec, const Participant& p) {
  Rng rng(derive_seed(spec.seed, "traits/" + p.participant_id));
  std::normal_distribution<double> jitter(0.0, 0.35);
  std::normal_distribution<double> tilt(0.0, 1.5);
  std::uniform_real_distribution<double> level(0.30, 0.60);
  Traits t;
  t.tb_structure = (p.group == Group::TBpos ? spec.effect_size : 0.0) + jitter(rng);
  t.or_structure = (p.group == Group::OR ? spec.effect_size : 0.0) + jitter(rng);
  t.tilt_db_oct = tilt(rng);
  t.level = level(rng);
  return t;
}

double gaussian_bump(double f, double centre, double width_oct) {
  const double o = std::log2(std::max(f, 1.0) / centre);
  return std::exp(-o * o / (2.0 * width_oct * width_oct));
}

// Cough spectral envelope in dB: -6 dB/octave away from 400 Hz, a TB profile
// (deficit near 200 Hz, surplus above 1.5 kHz) and an OR bump at 800 Hz.
double cough_gain_db(double f, double tb, double orr, double tilt) {
  const double fc = std::max(f, 50.0);
  const double octaves = std::log2(fc / 400.0);
  double db = -6.0 * std::abs(octaves) + tilt * octaves;
  db += tb * (-4.0 * gaussian_bump(fc, 200.0, 0.5) + 4.0 / (1.0 + std::exp(-(fc - 1500.0) / 200.0)));
  db += orr * 3.0 * gaussian_bump(fc, 800.0, 0.4);
  return db;
}

double background_gain_db(double f, double confound) {
  const double fc = std::max(f, 50.0);
  return -3.0 * std::log2(fc / 250.0) + confound * (1.0 + 0.5 * std::log2(fc / 1000.0));
}

// Gaussian noise of length n shaped by a per-bin dB gain.
// Shaped at the next power of two (fast FFT sizes) and truncated to n.
template <typename Gain>
Eigen::VectorXd shaped_noise(Rng& rng, Eigen::Index n_out, Gain&& gain_db) {
  std::normal_distribution<double> normal(0.0, 1.0);
  Eigen::Index n = 1;
  while (n < n_out) n <<= 1;
  std::vector<double> x(static_cast<std::size_t>(n));
  for (auto& v : x) v = normal(rng);
  Eigen::FFT<double> fft;
  fft.SetFlag(Eigen::FFT<double>::HalfSpectrum);
  std::vector<std::complex<double>> spec;
  fft.fwd(spec, x);
  for (std::size_t k = 0; k < spec.size(); ++k) {
    const double f = static_cast<double>(k) * kRate / static_cast<double>(n);
    spec[k] *= std::pow(10.0, gain_db(f) / 20.0);
  }
  std::vector<double> y;
  fft.inv(y, spec, static_cast<Eigen::Index>(n));
  return Eigen::Map<Eigen::VectorXd>(y.data(), n_out);
}

int hour_of(const std::string& ts) { return std::stoi(ts.substr(11, 2)); }

}  // namespace

int Participant::recording_hour() const { return hour_of(recorded_at); }

std::string Recording::key() const { return recording_key(participant_id, session_index, device); }

const Participant& StudyManifest::participant(const std::string& id) const {
  for (const auto& p : participants) {
    if (p.participant_id == id) return p;
  }
  throw DanglingReferenceError("unknown participant '" + id + "'");
}

std::array<int, 3> StudyManifest::group_totals() const {
  std::array<int, 3> totals{};
  for (const auto& p : participants) ++totals[static_cast<std::size_t>(class_index(p.group))];
  return totals;
}

StudyManifest parse_manifest(const json& j, const std::filesystem::path& base_dir, bool check_files) {
  if (!j.is_object()) throw SchemaError("$", "manifest must be a JSON object");
  StudyManifest m;
  m.base_dir = base_dir;
  m.schema_version = field<int>(j, "schema_version", "$");
  if (m.schema_version != kManifestSchemaVersion) {
    throw SchemaError("$.schema_version", "unsupported version " + std::to_string(m.schema_version));
  }
  const auto& parts = j.find("participants");
  if (parts == j.end() || !parts->is_array()) throw SchemaError("$.participants", "expected an array");
  std::set<std::string> ids;
  for (std::size_t i = 0; i < parts->size(); ++i) {
    const std::string path = "$.participants[" + std::to_string(i) + "]";
    Participant p = parse_participant((*parts)[i], path);
    if (!ids.insert(p.participant_id).second) {
      throw DuplicateIdError("duplicate participant_id '" + p.participant_id + "' at " + path);
    }
    m.participants.push_back(std::move(p));
  }
  if (m.participants.empty()) throw SchemaError("$.participants", "at least one participant required");

  const auto& recs = j.find("recordings");
  if (recs == j.end() || !recs->is_array()) throw SchemaError("$.recordings", "expected an array");
  std::set<std::string> with_recordings;
  std::set<std::string> keys;
  for (std::size_t i = 0; i < recs->size(); ++i) {
    const std::string path = "$.recordings[" + std::to_string(i) + "]";
    const json& r = (*recs)[i];
    if (!r.is_object()) throw SchemaError(path, "expected an object");
    Recording rec;
    rec.participant_id = field<std::string>(r, "participant_id", path);
    rec.session_index = field<int>(r, "session_index", path);
    if (rec.session_index < 1) throw SchemaError(path + ".session_index", "must be >= 1");
    rec.device = parse_enum(r, "device", path, parse_device);
    if (r.contains("wav")) rec.wav = base_dir / field<std::string>(r, "wav", path);
    if (r.contains("embeddings")) rec.embeddings = base_dir / field<std::string>(r, "embeddings", path);
    if (rec.wav.empty() && rec.embeddings.empty()) {
      throw SchemaError(path, "recording needs a 'wav' or 'embeddings' reference");
    }
    if (!ids.count(rec.participant_id)) {
      throw DanglingReferenceError(path + ".participant_id: undeclared participant '" + rec.participant_id + "'");
    }
    if (!keys.insert(rec.key()).second) throw DuplicateIdError(path + ": duplicate recording " + rec.key());
    if (check_files) {
      for (const auto& f : {rec.wav, rec.embeddings}) {
        if (!f.empty() && !std::filesystem::exists(f)) {
          throw DanglingReferenceError(path + ": referenced file does not exist: " + f.string());
        }
      }
    }
    with_recordings.insert(rec.participant_id);
    m.recordings.push_back(std::move(rec));
  }
  for (const auto& p : m.participants) {
    if (!with_recordings.count(p.participant_id)) {
      throw InvariantViolation("participant_has_recording", "participant '" + p.participant_id + "' has no recordings");
    }
  }
  return m;
}

StudyManifest load_manifest(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw FileNotFoundError(path.string());
  json j;
  try {
    j = json::parse(in);
  } catch (const json::parse_error& e) {
    throw SchemaError("$", std::string("invalid JSON: ") + e.what());
  }
  return parse_manifest(j, path.parent_path(), true);
}

json to_json(const StudyManifest& m) {
  json parts = json::array();
  for (const auto& p : m.participants) {
    parts.push_back({{"participant_id", p.participant_id},
                     {"group", group_label(p.group)},
                     {"gender", to_string(p.demographics.gender)},
                     {"age_years", p.demographics.age_years},
                     {"bmi", p.demographics.bmi},
                     {"symptom_present", p.demographics.symptom_present},
                     {"hiv_positive", p.hiv_positive},
                     {"site", to_string(p.site)},
                     {"recorded_at", p.recorded_at}});
  }
  json recs = json::array();
  for (const auto& r : m.recordings) {
    json o = {{"participant_id", r.participant_id}, {"session_index", r.session_index},
              {"device", device_token(r.device)}};
    if (!r.wav.empty()) o["wav"] = r.wav.lexically_relative(m.base_dir).generic_string();
    if (!r.embeddings.empty()) o["embeddings"] = r.embeddings.lexically_relative(m.base_dir).generic_string();
    recs.push_back(std::move(o));
  }
  return {{"schema_version", m.schema_version}, {"participants", parts}, {"recordings", recs}};
}

void write_manifest(const std::filesystem::path& path, const StudyManifest& m) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot open for writing: " + path.string());
  out << to_json(m).dump(2) << '\n';
}

void SimulationSpec::validate() const {
  for (int n : group_sizes) {
    if (n < 1) throw ConfigError("simulation group sizes must be >= 1");
  }
  if (!std::isfinite(effect_size) || effect_size < 0.0) throw ConfigError("effect_size must be finite and >= 0");
  if (!std::isfinite(background_confound)) throw ConfigError("background_confound must be finite");
  if (sessions < 1) throw ConfigError("sessions must be >= 1");
  if (min_coughs < 1 || max_coughs < min_coughs) throw ConfigError("need 1 <= min_coughs <= max_coughs");
}

json to_json(const SimulationSpec& s) {
  return {{"group_sizes", s.group_sizes},       {"effect_size", s.effect_size},
          {"background_confound", s.background_confound}, {"seed", s.seed},
          {"sessions", s.sessions},             {"min_coughs", s.min_coughs},
          {"max_coughs", s.max_coughs},         {"include_phone", s.include_phone}};
}

SimulationSpec simulation_spec_from_json(const json& j) {
  SimulationSpec s;
  try {
    if (j.contains("group_sizes")) s.group_sizes = j.at("group_sizes").get<std::array<int, 3>>();
    s.effect_size = j.value("effect_size", s.effect_size);
    s.background_confound = j.value("background_confound", s.background_confound);
    s.seed = j.value("seed", s.seed);
    s.sessions = j.value("sessions", s.sessions);
    s.min_coughs = j.value("min_coughs", s.min_coughs);
    s.max_coughs = j.value("max_coughs", s.max_coughs);
    s.include_phone = j.value("include_phone", s.include_phone);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("simulation spec: ") + e.what());
  }
  s.validate();
  return s;
}

StudyManifest simulate_manifest(const SimulationSpec& spec, const std::filesystem::path& wav_dir) {
  spec.validate();
  static const std::array<double, 3> male_rate = {0.77, 0.64, 0.60};
  static const std::array<std::array<double, 2>, 3> age = {{{34, 10}, {37, 13}, {32, 11}}};
  static const std::array<std::array<double, 4>, 3> bmi = {{{19, 3, 14, 29}, {22, 4, 14, 40}, {24, 6, 15, 48}}};
  static const std::array<double, 3> hiv_rate = {0.31, 0.34, 0.12};

  StudyManifest m;
  m.base_dir = ".";
  int serial = 0;
  for (Group g : kAllGroups) {
    const auto gi = static_cast<std::size_t>(class_index(g));
    for (int i = 0; i < spec.group_sizes[gi]; ++i) {
      Participant p;
      char id[16];
      std::snprintf(id, sizeof id, "P%04d", ++serial);
      p.participant_id = id;
      p.group = g;
      Rng rng(derive_seed(spec.seed, "demographics/" + p.participant_id));
      std::uniform_real_distribution<double> u(0.0, 1.0);
      std::normal_distribution<double> age_d(age[gi][0], age[gi][1]);
      std::normal_distribution<double> bmi_d(bmi[gi][0], bmi[gi][1]);
      p.demographics.gender = u(rng) < male_rate[gi] ? Gender::Male : Gender::Female;
      p.demographics.age_years = static_cast<int>(std::clamp(std::lround(age_d(rng)), 18L, 73L));
      p.demographics.bmi = std::round(std::clamp(bmi_d(rng), bmi[gi][2], bmi[gi][3]) * 10.0) / 10.0;
      p.demographics.symptom_present = g != Group::HC;
      p.hiv_positive = u(rng) < hiv_rate[gi];
      p.site = Site::Synthetic;
      const int day = 1 + static_cast<int>(u(rng) * 28.0);
      const int hour = 8 + static_cast<int>(u(rng) * 9.0);
      char ts[32];
      std::snprintf(ts, sizeof ts, "2024-03-%02dT%02d", std::min(day, 28), std::min(hour, 16));
      p.recorded_at = ts;

      for (int s = 1; s <= spec.sessions; ++s) {
        for (Device d : {Device::HighFidelityMic, Device::Smartphone}) {
          if (d == Device::Smartphone && !spec.include_phone) continue;
          Recording r;
          r.participant_id = p.participant_id;
          r.session_index = s;
          r.device = d;
          r.wav = wav_dir / (r.key() + ".wav");
          m.recordings.push_back(std::move(r));
        }
      }
      m.participants.push_back(std::move(p));
    }
  }
  return m;
}

AudioClip synthesize_recording(const SimulationSpec& spec, const Participant& participant,
                               const Recording& recording) {
  const Traits traits = participant_traits(spec, participant);
  // Coughs are shared by the devices of one session; each device adds its own noise.
  const std::string session = participant.participant_id + "/s" + std::to_string(recording.session_index);
  Rng rng(derive_seed(spec.seed, "session/" + session));
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::normal_distribution<double> cough_jitter(0.0, 0.2);

  const int n_coughs = spec.min_coughs + static_cast<int>(u(rng) * (spec.max_coughs - spec.min_coughs + 1));
  std::vector<double> lengths;
  // Redraw until the coughs make up enough of the recording for the detector's
  // 95th-percentile frame to land inside a cough.
  do {
    lengths.clear();
    for (int c = 0; c < std::max(1, n_coughs); ++c) lengths.push_back(0.12 + 0.28 * u(rng));
  } while (std::accumulate(lengths.begin(), lengths.end(), 0.0) < 0.5);

  const double lead = 0.3 + 0.3 * u(rng);
  const double tail = 3.3 + 0.3 * u(rng);
  std::vector<double> gaps;
  for (int c = 1; c < n_coughs; ++c) gaps.push_back(0.6 + 0.3 * u(rng));
  const double total =
      lead + std::accumulate(lengths.begin(), lengths.end(), 0.0) + std::accumulate(gaps.begin(), gaps.end(), 0.0) + tail;
  const auto n = static_cast<Eigen::Index>(std::llround(total * kRate));

  Eigen::VectorXd signal = Eigen::VectorXd::Zero(n);
  double t = lead;
  for (int c = 0; c < n_coughs; ++c) {
    const double tb = traits.tb_structure + cough_jitter(rng);
    const double orr = traits.or_structure + cough_jitter(rng);
    const auto len = static_cast<Eigen::Index>(std::llround(lengths[static_cast<std::size_t>(c)] * kRate));
    Eigen::VectorXd burst =
        shaped_noise(rng, len, [&](double f) { return cough_gain_db(f, tb, orr, traits.tilt_db_oct); });
    burst /= burst.cwiseAbs().maxCoeff();
    const double peak = traits.level * (0.85 + 0.3 * u(rng));
    const auto start = static_cast<Eigen::Index>(std::llround(t * kRate));
    for (Eigen::Index i = 0; i < len && start + i < n; ++i) {
      const double env = std::pow(std::sin(std::numbers::pi * (i + 0.5) / len), 0.7);
      signal[start + i] += peak * env * burst[i];
    }
    t += lengths[static_cast<std::size_t>(c)] + (c + 1 < n_coughs ? gaps[static_cast<std::size_t>(c)] : 0.0);
  }

  const bool phone = recording.device == Device::Smartphone;
  const double confound = participant.group == Group::TBpos ? spec.background_confound : 0.0;
  Rng noise_rng(derive_seed(spec.seed, "background/" + recording.key()));
  Eigen::VectorXd bg = shaped_noise(noise_rng, n, [&](double f) { return background_gain_db(f, confound); });
  const double bg_rms = std::sqrt(bg.squaredNorm() / static_cast<double>(n));
  const double bg_level = traits.level * std::pow(10.0, (phone ? -26.0 : -32.0) / 20.0);
  signal += bg * (bg_level / bg_rms);

  if (phone) {
    // One-pole high-pass near 300 Hz and a lower capture gain.
    const double rc = 1.0 / (2.0 * std::numbers::pi * 300.0);
    const double alpha = rc / (rc + 1.0 / kRate);
    Eigen::VectorXd y(n);
    y[0] = signal[0];
    for (Eigen::Index i = 1; i < n; ++i) y[i] = alpha * (y[i - 1] + signal[i] - signal[i - 1]);
    signal = 0.7 * y;
  }

  AudioClip clip;
  clip.samples = quantise_pcm16(signal.cwiseMax(-1.0).cwiseMin(1.0).cast<float>());
  clip.sample_rate = kCanonicalRate;
  clip.source_device = recording.device;
  clip.participant_id = participant.participant_id;
  clip.session_index = recording.session_index;
  clip.recorded_at = participant.recorded_at;
  return clip;
}

StudyManifest simulate_cohort(const SimulationSpec& spec, const std::filesystem::path& out_dir, int jobs) {
  StudyManifest m = simulate_manifest(spec, "wav");
  std::filesystem::create_directories(out_dir / "wav");
  m.base_dir = out_dir;
  // WAV paths are relative until here; anchor them.
  for (auto& r : m.recordings) r.wav = out_dir / r.wav;
  parallel_for(m.recordings.size(), jobs, [&](std::size_t i) {
    const Recording& r = m.recordings[i];
    write_wav(r.wav, synthesize_recording(spec, m.participant(r.participant_id), r));
  });
  write_manifest(out_dir / "manifest.json", m);
  return m;
}

AudioClip WavRecordingSource::load(const Participant& participant, const Recording& recording) const {
  if (recording.wav.empty()) throw DataError("recording " + recording.key() + " has no WAV reference");
  AudioClip clip = load_wav(recording.wav);
  clip.source_device = recording.device;
  clip.participant_id = participant.participant_id;
  clip.session_index = recording.session_index;
  clip.recorded_at = participant.recorded_at;
  return clip;
}

AudioClip SimulatedRecordingSource::load(const Participant& participant, const Recording& recording) const {
  return synthesize_recording(spec_, participant, recording);
}

}  // namespace coughtb
