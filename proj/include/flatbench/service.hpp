#pragma once

// HTTP session API over the simulated flattening loop.
//
//   POST /sessions                        {"seed"?, "method"?, "config"?} -> {"id", ...state}
//   GET  /sessions/{id}/state             metrics + image references
//   POST /sessions/{id}/action            PolicyAction JSON -> step result
//   GET  /sessions/{id}/suggest?method=m  PolicyAction JSON, or {"flat": true, ...}
//   GET  /sessions/{id}/record            EpisodeRecord JSON
//   GET  /sessions/{id}/heatmap.json      wrinkle field of the current observation
//   GET  /images/{hash}.png               observation / heatmap PNGs by content hash

#include <atomic>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <shared_mutex>
#include <string>

#include "flatbench/bench.hpp"
#include "flatbench/png_io.hpp"
#include "flatbench/serialization.hpp"

#include <httplib.h>

namespace flatbench {

struct ServiceConfig {
  RunConfig run;
  std::string records_dir;  // empty: records are kept in memory only
};

/// {"run": RunConfig overrides, "records_dir": "path"}
inline ServiceConfig service_config_from_json(const Json& j) {
  detail::ObjectReader r(j, "service");
  ServiceConfig c;
  if (const Json* run = r.child("run")) c.run = run_config_from_json(*run);
  r.opt("records_dir", c.records_dir).done();
  return c;
}

enum class SessionStatus { Running, Done, Failed };

constexpr std::string_view to_string(SessionStatus s) {
  switch (s) {
    case SessionStatus::Running: return "running";
    case SessionStatus::Done: return "done";
    case SessionStatus::Failed: return "failed";
  }
  return "unknown";
}

/// Content-addressed PNG store shared by all sessions.
class ImageStore {
 public:
  std::string put(std::string png) {
    const auto* p = reinterpret_cast<const std::uint8_t*>(png.data());
    std::string key = hex64(fnv1a64({p, png.size()}));
    std::lock_guard lock(mu_);
    images_.try_emplace(key, std::make_shared<const std::string>(std::move(png)));
    return key;
  }
  std::shared_ptr<const std::string> get(const std::string& key) const {
    std::lock_guard lock(mu_);
    auto it = images_.find(key);
    return it == images_.end() ? nullptr : it->second;
  }

 private:
  mutable std::mutex mu_;
  std::map<std::string, std::shared_ptr<const std::string>> images_;
};

class Session {
 public:
  Session(std::string id, const RunConfig& cfg, std::uint64_t seed, Method method, ImageStore& images,
          std::string records_dir)
      : id_(std::move(id)), episode_(cfg, seed, method), images_(images), records_dir_(std::move(records_dir)) {
    publish();
  }

  const std::string& id() const noexcept { return id_; }

  std::string state_json() const {
    std::shared_lock lock(view_mu_);
    return state_;
  }
  std::string record_json() const {
    std::shared_lock lock(view_mu_);
    return record_;
  }
  std::string heatmap_json() const {
    std::shared_lock lock(view_mu_);
    return heatmap_;
  }

  /// Executes one externally supplied action. A concurrent call on the same
  /// session fails with Busy instead of queueing.
  Json act(const PolicyAction& requested) {
    std::unique_lock lock(step_mu_, std::try_to_lock);
    if (!lock.owns_lock()) throw Error(ErrorCode::Busy, "another action is in progress for this session");
    if (status_ != SessionStatus::Running) throw Error(ErrorCode::SessionDone, "session is no longer running");
    const auto& cam = episode_.config().camera;
    const PolicyAction a = validate_action(requested, cam.image_w, cam.image_h);
    try {
      const StepRecord& s = episode_.execute(a);
      Json out{{"step", s.step},
               {"outcome", to_string(s.outcome)},
               {"coverage", s.coverage},
               {"relative_coverage", s.relative_coverage}};
      publish();
      out["status"] = to_string(status_);
      return out;
    } catch (const Error& e) {
      if (e.code() != ErrorCode::Unstable) throw;
      failure_ = e.what();
      status_ = SessionStatus::Failed;
      publish();
      throw;
    }
  }

  /// What `method` would do now, with the step seed bench would use.
  Json suggest(Method method) {
    if (method == Method::Human) throw Error(ErrorCode::InvalidAction, "method must be proposed, random or heuristic");
    std::lock_guard lock(step_mu_);
    if (status_ != SessionStatus::Running) throw Error(ErrorCode::SessionDone, "session is no longer running");
    try {
      return action_to_json(episode_.suggest(method, episode_.next_seed()));
    } catch (const Error& e) {
      if (e.code() != ErrorCode::NoWrinkle) throw;
      return Json{{"flat", true}, {"message", "cloth appears flat"}};
    }
  }

 private:
  // Rebuilds every cached view; called with step_mu_ held (or from the ctor).
  void publish() {
    if (status_ == SessionStatus::Running && episode_.done()) status_ = SessionStatus::Done;
    const Observation& obs = episode_.observation();
    const std::string obs_key = images_.put(encode_png(obs.image));
    const WrinkleField& field = episode_.field();
    const std::string heat_key = images_.put(encode_png(heatmap_image(field)));

    Json state{{"id", id_},
               {"status", to_string(status_)},
               {"step", episode_.step()},
               {"max_steps", episode_.config().max_steps},
               {"coverage", obs.coverage},
               {"full_coverage", episode_.record().full_coverage},
               {"relative_coverage", episode_.relative_coverage()},
               {"stop_threshold", episode_.config().stop_threshold},
               {"com", obs.com ? Json::array({obs.com->x(), obs.com->y()}) : Json(nullptr)},
               {"width", obs.image.width()},
               {"height", obs.image.height()},
               {"observation", "/images/" + obs_key + ".png"},
               {"heatmap", "/images/" + heat_key + ".png"}};
    EpisodeRecord rec = episode_.record();
    if (status_ == SessionStatus::Failed) {
      rec.valid = false;
      rec.error = failure_;
      state["error"] = failure_;
    }
    std::string record = record_to_json(rec).dump();
    std::string heat = wrinkle_field_to_json(field).dump();
    {
      std::unique_lock lock(view_mu_);
      state_ = state.dump();
      record_ = record;
      heatmap_ = std::move(heat);
    }
    if (status_ != SessionStatus::Running && !records_dir_.empty()) flush(record);
  }

  void flush(const std::string& record) const {
    std::filesystem::create_directories(records_dir_);
    const std::string name = "session_" + id_ + ".json";
    write_file(std::filesystem::path(records_dir_) / name, record + "\n");
  }

  std::string id_;
  Episode episode_;
  ImageStore& images_;
  std::string records_dir_;
  SessionStatus status_ = SessionStatus::Running;
  std::string failure_;

  std::mutex step_mu_;
  mutable std::shared_mutex view_mu_;
  std::string state_, record_, heatmap_;
};

class SessionManager {
 public:
  explicit SessionManager(ServiceConfig cfg) : cfg_(std::move(cfg)) { cfg_.run.validate(); }

  /// Body: {"seed"?: uint, "method"?: label (default human), "config"?: RunConfig overrides}.
  std::shared_ptr<Session> create(const Json& body) {
    detail::ObjectReader r(body, "session");
    std::uint64_t seed = cfg_.run.seed_base;
    std::string method = "human";
    r.opt("seed", seed).opt("method", method);
    RunConfig run = cfg_.run;
    if (const Json* c = r.child("config")) run = run_config_from_json(*c, run);
    r.done();
    const Method m = parse_method(method);
    run.method = m;
    const std::string id = std::to_string(++counter_);
    auto s = std::make_shared<Session>(id, run, seed, m, images_, cfg_.records_dir);
    std::lock_guard lock(mu_);
    sessions_.emplace(id, s);
    return s;
  }

  std::shared_ptr<Session> find(const std::string& id) const {
    std::lock_guard lock(mu_);
    auto it = sessions_.find(id);
    if (it == sessions_.end()) throw Error(ErrorCode::UnknownSession, "no session '" + id + "'");
    return it->second;
  }

  const ImageStore& images() const noexcept { return images_; }

 private:
  ServiceConfig cfg_;
  ImageStore images_;
  std::atomic<std::uint64_t> counter_{0};
  mutable std::mutex mu_;
  std::map<std::string, std::shared_ptr<Session>> sessions_;
};

inline int http_status(ErrorCode c) {
  switch (c) {
    case ErrorCode::UnknownSession: return 404;
    case ErrorCode::SessionDone:
    case ErrorCode::Busy: return 409;
    case ErrorCode::InvalidAction:
    case ErrorCode::BadConfig:
    case ErrorCode::BadParams: return 400;
    default: return 500;
  }
}

/// Binds the routes of `mgr` onto an httplib server; the caller owns both
/// and decides how to listen.
inline void install_routes(httplib::Server& srv, SessionManager& mgr) {
  constexpr const char* kJson = "application/json";
  auto guarded = [](auto&& fn) {
    return [fn](const httplib::Request& req, httplib::Response& res) {
      try {
        fn(req, res);
      } catch (const Error& e) {
        res.status = http_status(e.code());
        res.set_content(error_to_json(e).dump(), "application/json");
      } catch (const nlohmann::json::exception& e) {
        res.status = 400;
        res.set_content(error_to_json(Error(ErrorCode::BadConfig, e.what())).dump(), "application/json");
      } catch (const std::exception& e) {
        res.status = 500;
        res.set_content(Json{{"error", "Internal"}, {"message", e.what()}}.dump(), "application/json");
      }
    };
  };
  auto body_json = [](const httplib::Request& req) {
    if (req.body.empty()) return Json::object();
    return Json::parse(req.body);
  };

  srv.Post("/sessions", guarded([&mgr, body_json, kJson](const httplib::Request& req, httplib::Response& res) {
             auto s = mgr.create(body_json(req));
             res.set_content(s->state_json(), kJson);
           }));
  srv.Get(R"(/sessions/([^/]+)/state)", guarded([&mgr, kJson](const httplib::Request& req, httplib::Response& res) {
            res.set_content(mgr.find(req.matches[1])->state_json(), kJson);
          }));
  srv.Get(R"(/sessions/([^/]+)/record)", guarded([&mgr, kJson](const httplib::Request& req, httplib::Response& res) {
            res.set_content(mgr.find(req.matches[1])->record_json(), kJson);
          }));
  srv.Get(R"(/sessions/([^/]+)/heatmap\.json)", guarded([&mgr, kJson](const httplib::Request& req, httplib::Response& res) {
            res.set_content(mgr.find(req.matches[1])->heatmap_json(), kJson);
          }));
  srv.Post(R"(/sessions/([^/]+)/action)",
           guarded([&mgr, body_json, kJson](const httplib::Request& req, httplib::Response& res) {
             auto s = mgr.find(req.matches[1]);
             const PolicyAction a = [&] {
               try {
                 return action_from_json(body_json(req));
               } catch (const Error& e) {
                 throw Error(ErrorCode::InvalidAction, e.what());
               } catch (const nlohmann::json::exception& e) {
                 throw Error(ErrorCode::InvalidAction, e.what());
               }
             }();
             res.set_content(s->act(a).dump(), kJson);
           }));
  srv.Get(R"(/sessions/([^/]+)/suggest)", guarded([&mgr, kJson](const httplib::Request& req, httplib::Response& res) {
            auto s = mgr.find(req.matches[1]);
            if (!req.has_param("method")) throw Error(ErrorCode::InvalidAction, "missing method parameter");
            Method m;
            try {
              m = parse_method(req.get_param_value("method"));
            } catch (const Error& e) {
              throw Error(ErrorCode::InvalidAction, e.what());
            }
            res.set_content(s->suggest(m).dump(), kJson);
          }));
  srv.Get(R"(/images/([0-9a-f]{16})\.png)", [&mgr](const httplib::Request& req, httplib::Response& res) {
    auto img = mgr.images().get(req.matches[1]);
    if (!img) {
      res.status = 404;
      res.set_content(Json{{"error", "NotFound"}, {"message", "unknown image"}}.dump(), "application/json");
      return;
    }
    res.set_content(*img, "image/png");
  });
}

}  // namespace flatbench
