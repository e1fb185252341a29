#include "coughtb/screening_service.hpp"

#include <httplib.h>

#include <charconv>
#include <cstdio>
#include <fstream>

#include "coughtb/errors.hpp"

namespace coughtb {
namespace {

using nlohmann::json;

ServiceResponse error(int status, const std::string& message, json extra = json::object()) {
  extra["error"] = message;
  return {status, extra};
}

std::optional<double> parse_double(const std::string& s) {
  double v = 0.0;
  const auto* end = s.data() + s.size();
  const auto [ptr, ec] = std::from_chars(s.data(), end, v);
  if (ec != std::errc() || ptr != end) return std::nullopt;
  return v;
}

json segments_json(const std::vector<CoughSegment>& segs) {
  json out = json::array();
  for (const auto& s : segs) {
    out.push_back({{"segment_id", s.id},
                   {"onset_s", s.onset_s},
                   {"offset_s", s.offset_s},
                   {"duration_s", s.offset_s - s.onset_s}});
  }
  return out;
}

}  // namespace

std::string_view to_string(SessionState s) {
  switch (s) {
    case SessionState::Open: return "Open";
    case SessionState::HasAudio: return "HasAudio";
    case SessionState::HasDemographics: return "HasDemographics";
    case SessionState::Scored: return "Scored";
    case SessionState::Closed: return "Closed";
  }
  return "?";
}

std::optional<SessionState> next_state(SessionState s, SessionAction a, bool has_coughs, bool has_demographics) {
  using S = SessionState;
  if (s == S::Closed) return std::nullopt;
  if (a == SessionAction::Close) return S::Closed;
  switch (s) {
    case S::Open:
      if (a == SessionAction::Upload) {
        if (!has_coughs) return S::Open;
        return has_demographics ? S::HasDemographics : S::HasAudio;
      }
      if (a == SessionAction::Demographics) return S::Open;
      return std::nullopt;
    case S::HasAudio:
      if (a == SessionAction::Upload) return S::HasAudio;
      if (a == SessionAction::Demographics) return S::HasDemographics;
      return std::nullopt;
    case S::HasDemographics:
      if (a == SessionAction::Demographics) return S::HasDemographics;
      if (a == SessionAction::Score) return S::Scored;
      return std::nullopt;
    case S::Scored:
      if (a == SessionAction::Score) return S::Scored;
      return std::nullopt;
    case S::Closed: return std::nullopt;
  }
  return std::nullopt;
}

std::vector<CoughSegment> segment_upload(const ModelBundle& bundle, std::string_view wav_bytes,
                                         const std::string& session_id, int recording_index) {
  AudioClip clip = decode_wav(wav_bytes);
  clip.participant_id = session_id;
  clip.session_index = recording_index;
  clip.source_device = Device::HighFidelityMic;
  return bundle_segments(bundle, clip);
}

Demographics parse_demographics(const json& j, std::vector<FieldIssue>& issues) {
  Demographics d;
  if (!j.is_object()) {
    issues.push_back({"$", "expected a JSON object"});
    return d;
  }
  const auto field = [&](const char* name) -> const json* {
    if (!j.contains(name)) {
      issues.push_back({name, "required"});
      return nullptr;
    }
    return &j.at(name);
  };
  if (const json* v = field("age")) {
    if (v->is_number_integer()) {
      d.age_years = v->get<int>();
    } else {
      issues.push_back({"age", "must be an integer number of years"});
    }
  }
  if (const json* v = field("gender")) {
    try {
      d.gender = parse_gender(v->get<std::string>());
    } catch (const std::exception&) {
      issues.push_back({"gender", "must be \"male\" or \"female\""});
    }
  }
  if (const json* v = field("bmi")) {
    if (v->is_number()) {
      d.bmi = v->get<double>();
    } else {
      issues.push_back({"bmi", "must be a number"});
    }
  }
  if (const json* v = field("symptom")) {
    if (v->is_boolean()) {
      d.symptom_present = v->get<bool>();
    } else {
      issues.push_back({"symptom", "must be true or false"});
    }
  }
  if (issues.empty()) {
    for (auto& i : validate_demographics(d)) {
      if (i.field == "age_years") i.field = "age";
      if (i.field == "symptom_present") i.field = "symptom";
      issues.push_back(std::move(i));
    }
  }
  return d;
}

ScreeningService::ScreeningService(std::shared_ptr<const ModelBundle> bundle, ServiceOptions options)
    : bundle_(std::move(bundle)), options_(std::move(options)) {
  if (!options_.audit_dir.empty()) std::filesystem::create_directories(options_.audit_dir);
}

std::shared_ptr<ScreeningService::Session> ScreeningService::find(const std::string& id) const {
  std::lock_guard lock(sessions_mutex_);
  const auto it = sessions_.find(id);
  return it == sessions_.end() ? nullptr : it->second;
}

void ScreeningService::audit(const Session& s, const std::string& action, int status) const {
  if (options_.audit_dir.empty()) return;
  json line = {{"session_id", s.id}, {"action", action}, {"status", status}, {"state", to_string(s.state)}};
  if (s.result && action == "score" && status == 200) line["result"] = *s.result;
  std::lock_guard lock(audit_mutex_);
  std::ofstream out(options_.audit_dir / (s.id + ".jsonl"), std::ios::app);
  out << line.dump() << '\n';
}

ServiceResponse ScreeningService::health() const {
  json body = {{"ready", bundle_ != nullptr}, {"version", COUGHTB_VERSION}};
  body["model_id"] = bundle_ ? json(bundle_->model_id) : json(nullptr);
  return {200, body};
}

ServiceResponse ScreeningService::create_session() {
  if (!bundle_) return error(503, "no model bundle loaded");
  auto s = std::make_shared<Session>();
  {
    std::lock_guard lock(sessions_mutex_);
    char buf[32];
    std::snprintf(buf, sizeof buf, "S%06llu", static_cast<unsigned long long>(next_id_++));
    s->id = buf;
    sessions_[s->id] = s;
  }
  audit(*s, "create", 201);
  return {201, {{"session_id", s->id}, {"state", to_string(s->state)}}};
}

ServiceResponse ScreeningService::get_session(const std::string& id) const {
  const auto s = find(id);
  if (!s) return error(404, "unknown session");
  std::lock_guard lock(s->mutex);
  json body = {{"session_id", s->id},
               {"state", to_string(s->state)},
               {"recordings", s->recordings},
               {"segments", segments_json(s->coughs)},
               {"has_demographics", s->demographics.has_value()}};
  if (s->result) body["result"] = *s->result;
  return {200, body};
}

ServiceResponse ScreeningService::upload_recording(const std::string& id, std::string_view body) {
  const auto s = find(id);
  if (!s) return error(404, "unknown session");
  std::lock_guard lock(s->mutex);
  const auto refuse = [&] {
    audit(*s, "upload", 409);
    return error(409, "recordings are not accepted in state " + std::string(to_string(s->state)));
  };
  // The transition is checked before the body so a wrong state always wins.
  if (!next_state(s->state, SessionAction::Upload, true, s->demographics.has_value())) return refuse();
  if (body.size() > kMaxBodyBytes) return error(413, "body exceeds 50 MB");
  std::vector<CoughSegment> segs;
  try {
    segs = segment_upload(*bundle_, body, s->id, s->recordings + 1);
  } catch (const Error& e) {
    audit(*s, "upload", 400);
    return error(400, e.what());
  }
  s->state = *next_state(s->state, SessionAction::Upload, !segs.empty(), s->demographics.has_value());
  if (!segs.empty()) {
    ++s->recordings;
    s->coughs.insert(s->coughs.end(), segs.begin(), segs.end());
  }
  audit(*s, "upload", 200);
  return {200,
          {{"session_id", s->id},
           {"state", to_string(s->state)},
           {"segments", segments_json(segs)},
           {"total_segments", s->coughs.size()},
           {"advisory", segs.empty() ? "retry" : "ok"}}};
}

ServiceResponse ScreeningService::put_demographics(const std::string& id, std::string_view body) {
  const auto s = find(id);
  if (!s) return error(404, "unknown session");
  std::lock_guard lock(s->mutex);
  const auto next = next_state(s->state, SessionAction::Demographics, !s->coughs.empty(), true);
  if (!next) {
    audit(*s, "demographics", 409);
    return error(409, "demographics are not accepted in state " + std::string(to_string(s->state)));
  }
  json j;
  try {
    j = json::parse(body);
  } catch (const json::parse_error& e) {
    audit(*s, "demographics", 400);
    return error(400, std::string("malformed JSON: ") + e.what());
  }
  std::vector<FieldIssue> issues;
  const Demographics d = parse_demographics(j, issues);
  if (!issues.empty()) {
    json fields = json::object();
    for (const auto& i : issues) fields[i.field] = i.message;
    audit(*s, "demographics", 422);
    return error(422, "invalid demographics", {{"fields", fields}});
  }
  s->demographics = d;
  s->state = *next;
  audit(*s, "demographics", 200);
  return {200, {{"session_id", s->id}, {"state", to_string(s->state)}}};
}

ServiceResponse ScreeningService::score(const std::string& id, const std::optional<std::string>& task_param,
                                        const std::optional<std::string>& threshold_param) {
  const auto s = find(id);
  if (!s) return error(404, "unknown session");
  std::lock_guard lock(s->mutex);
  const auto next = next_state(s->state, SessionAction::Score, !s->coughs.empty(), s->demographics.has_value());
  if (!next) {
    audit(*s, "score", 409);
    return error(409, "cannot score in state " + std::string(to_string(s->state)));
  }
  Task task = Task::TbVsRest;
  if (task_param) {
    try {
      task = parse_task(*task_param);
    } catch (const std::exception&) {
      audit(*s, "score", 422);
      return error(422, "unknown task '" + *task_param + "'", {{"fields", {{"task", "unknown task"}}}});
    }
  }
  double tau = kDefaultOperatingPoint;
  if (threshold_param) {
    const auto v = parse_double(*threshold_param);
    if (!v || !(*v > 0.0 && *v < 1.0)) {
      audit(*s, "score", 400);
      return error(400, "threshold must be a number in (0, 1)");
    }
    tau = *v;
  }
  const ScoreResult r = score_segments(*bundle_, s->coughs, *s->demographics, task);
  json body = {{"session_id", s->id},
               {"task", to_string(task)},
               {"score", r.score},
               {"threshold", tau},
               {"decision", r.score >= tau ? "refer" : "no-refer"},
               {"model_id", bundle_->model_id},
               {"operating_point_source", threshold_param ? "request" : "default 0.38"},
               {"segments", r.segments},
               {"acoustic_probs", {r.vote.mean_probs[0], r.vote.mean_probs[1], r.vote.mean_probs[2]}}};
  // Cross-validated metrics at this threshold, when it is a validated sweep point.
  const std::string tkey(to_string(task));
  if (bundle_->sweep.contains(tkey)) {
    for (const auto& row : bundle_->sweep.at(tkey)) {
      if (std::abs(row.at("tau").get<double>() - tau) < 1e-12) body["validated_operating_point"] = row;
    }
  }
  s->state = *next;
  s->result = body;
  body["state"] = to_string(s->state);
  audit(*s, "score", 200);
  return {200, body};
}

ServiceResponse ScreeningService::close_session(const std::string& id) {
  const auto s = find(id);
  if (!s) return error(404, "unknown session");
  std::lock_guard lock(s->mutex);
  const auto next = next_state(s->state, SessionAction::Close, false, false);
  if (!next) {
    audit(*s, "close", 409);
    return error(409, "session already closed");
  }
  s->state = *next;
  audit(*s, "close", 200);
  return {200, {{"session_id", s->id}, {"state", to_string(s->state)}}};
}

void ScreeningService::mount(httplib::Server& server) {
  const auto send = [](httplib::Response& res, const ServiceResponse& r) {
    res.status = r.status;
    res.set_content(r.body.dump(), "application/json");
  };
  const auto param = [](const httplib::Request& req, const char* name) -> std::optional<std::string> {
    if (!req.has_param(name)) return std::nullopt;
    return req.get_param_value(name);
  };
  server.set_payload_max_length(kMaxBodyBytes);
  server.Get("/healthz", [=, this](const httplib::Request&, httplib::Response& res) { send(res, health()); });
  server.Post("/sessions", [=, this](const httplib::Request&, httplib::Response& res) { send(res, create_session()); });
  server.Get(R"(/sessions/([^/]+))", [=, this](const httplib::Request& req, httplib::Response& res) {
    send(res, get_session(req.matches[1]));
  });
  server.Post(R"(/sessions/([^/]+)/recordings)", [=, this](const httplib::Request& req, httplib::Response& res) {
    send(res, upload_recording(req.matches[1], req.body));
  });
  server.Put(R"(/sessions/([^/]+)/demographics)", [=, this](const httplib::Request& req, httplib::Response& res) {
    send(res, put_demographics(req.matches[1], req.body));
  });
  server.Post(R"(/sessions/([^/]+)/score)", [=, this](const httplib::Request& req, httplib::Response& res) {
    send(res, score(req.matches[1], param(req, "task"), param(req, "threshold")));
  });
  server.Post(R"(/sessions/([^/]+)/close)", [=, this](const httplib::Request& req, httplib::Response& res) {
    send(res, close_session(req.matches[1]));
  });
  server.set_exception_handler([](const httplib::Request&, httplib::Response& res, std::exception_ptr ep) {
    std::string what = "internal error";
    try {
      std::rethrow_exception(ep);
    } catch (const std::exception& e) {
      what = e.what();
    } catch (...) {
    }
    res.status = 500;
    res.set_content(json{{"error", what}}.dump(), "application/json");
  });
}

void run_server(ScreeningService& service, const std::string& host, int port) {
  httplib::Server server;
  service.mount(server);
  if (!server.listen(host, port)) throw ConfigError("cannot listen on " + host + ":" + std::to_string(port));
}

}  // namespace coughtb
