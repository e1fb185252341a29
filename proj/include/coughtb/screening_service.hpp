#pragma once

#include <cstdint>
#include <filesystem>
#include <json.hpp>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "coughtb/pipeline.hpp"

namespace httplib {
class Server;
}

namespace coughtb {

inline constexpr double kDefaultOperatingPoint = 0.38;
inline constexpr std::size_t kMaxBodyBytes = 50u * 1024u * 1024u;

enum class SessionState { Open, HasAudio, HasDemographics, Scored, Closed };
std::string_view to_string(SessionState s);

enum class SessionAction { Upload, Demographics, Score, Close };

// The transition table. nullopt means the action is refused (HTTP 409) in that
// state. Uploads and demographics without effect on the state (a silent clip,
// demographics before audio) keep the current state.
std::optional<SessionState> next_state(SessionState s, SessionAction a, bool has_coughs, bool has_demographics);

// Decode an uploaded WAV and cut its coughs with the bundle's settings. Segment
// ids are "<session>-s<index>-mic/c<j>". Shared by the service and `coughtb score`.
std::vector<CoughSegment> segment_upload(const ModelBundle& bundle, std::string_view wav_bytes,
                                         const std::string& session_id, int recording_index);

Demographics parse_demographics(const nlohmann::json& j, std::vector<FieldIssue>& issues);

struct ServiceResponse {
  int status = 200;
  nlohmann::json body;
};

struct ServiceOptions {
  std::filesystem::path audit_dir;  // empty: no audit log
};

class ScreeningService {
 public:
  explicit ScreeningService(std::shared_ptr<const ModelBundle> bundle, ServiceOptions options = {});

  ServiceResponse health() const;
  ServiceResponse create_session();
  ServiceResponse get_session(const std::string& id) const;
  ServiceResponse upload_recording(const std::string& id, std::string_view body);
  ServiceResponse put_demographics(const std::string& id, std::string_view body);
  ServiceResponse score(const std::string& id, const std::optional<std::string>& task,
                        const std::optional<std::string>& threshold);
  ServiceResponse close_session(const std::string& id);

  // Registers every route on `server` (and the 50 MB body limit).
  void mount(httplib::Server& server);

 private:
  struct Session {
    std::mutex mutex;
    std::string id;
    SessionState state = SessionState::Open;
    int recordings = 0;
    std::vector<CoughSegment> coughs;
    std::optional<Demographics> demographics;
    std::optional<nlohmann::json> result;
  };

  std::shared_ptr<Session> find(const std::string& id) const;
  void audit(const Session& s, const std::string& action, int status) const;

  std::shared_ptr<const ModelBundle> bundle_;
  ServiceOptions options_;
  mutable std::mutex sessions_mutex_;
  std::map<std::string, std::shared_ptr<Session>> sessions_;
  std::uint64_t next_id_ = 1;
  mutable std::mutex audit_mutex_;
};

// Blocks serving on host:port until the process is stopped.
void run_server(ScreeningService& service, const std::string& host, int port);

}  // namespace coughtb
