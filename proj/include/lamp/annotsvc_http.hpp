#pragma once

// HTTP+JSON front of the annotation service. Offsets in requests and
// responses are Unicode scalar-value indices.

#include <string>

#include <httplib.h>

#include "lamp/annotsvc.hpp"

namespace lamp::annotsvc {

namespace detail {

inline void reply(httplib::Response& res, int status, const ordered_json& body) {
  res.status = status;
  res.set_content(body.dump(-1, ' ', false), "application/json");
}

inline int status_of(ServiceError::Code c) {
  switch (c) {
    case ServiceError::Code::BadRequest: return 400;
    case ServiceError::Code::NotFound: return 404;
    case ServiceError::Code::Conflict: return 409;
  }
  return 500;
}

template <typename Fn>
void guarded(httplib::Response& res, Fn&& fn) {
  try {
    fn();
  } catch (const ServiceError& e) {
    reply(res, status_of(e.code()), {{"error", e.what()}});
  } catch (const json::exception& e) {
    reply(res, 400, {{"error", std::string("malformed request: ") + e.what()}});
  } catch (const CorpusError& e) {
    reply(res, 400, {{"error", e.what()}});
  } catch (const std::exception& e) {
    reply(res, 500, {{"error", e.what()}});
  }
}

inline std::string required_param(const httplib::Request& req, const char* name) {
  if (!req.has_param(name) || req.get_param_value(name).empty()) {
    throw bad_request(std::string("missing query parameter '") + name + "'");
  }
  return req.get_param_value(name);
}

}  // namespace detail

/// Registers the API routes (and the UI directory, when given) on `server`.
inline void mount(httplib::Server& server, Store& store, const std::string& static_dir = {}) {
  using detail::guarded;
  using detail::reply;

  server.Get("/api/tasks/next", [&store](const httplib::Request& req, httplib::Response& res) {
    guarded(res, [&] {
      auto task = store.next_task(detail::required_param(req, "annotator"));
      if (!task) return reply(res, 200, {{"paragraph", nullptr}});
      ordered_json edits = ordered_json::array();
      for (const auto& e : task->edits) edits.push_back(edit_to_json(e));
      reply(res, 200, {{"paragraph", record_fields_to_json(task->record)}, {"edits", edits}});
    });
  });

  server.Post("/api/edits", [&store](const httplib::Request& req, httplib::Response& res) {
    guarded(res, [&] {
      auto j = json::parse(req.body);
      std::optional<std::string> original;
      if (j.contains("original") && !j["original"].is_null()) original = j["original"].get<std::string>();
      auto seq = store.submit_edit(j.at("annotator").get<std::string>(), j.at("paragraph_id").get<std::string>(),
                                   j.at("start").get<std::size_t>(), j.at("end").get<std::size_t>(),
                                   j.at("replacement").get<std::string>(), category_from_json(j.at("category")),
                                   original);
      reply(res, 200, {{"seq", seq}});
    });
  });

  server.Post("/api/edits/undo", [&store](const httplib::Request& req, httplib::Response& res) {
    guarded(res, [&] {
      auto j = json::parse(req.body);
      auto seq = store.undo(j.at("annotator").get<std::string>(), j.at("paragraph_id").get<std::string>());
      reply(res, 200, {{"seq", seq}});
    });
  });

  server.Post("/api/scores", [&store](const httplib::Request& req, httplib::Response& res) {
    guarded(res, [&] {
      auto j = json::parse(req.body);
      auto seq = store.submit_scores(j.at("annotator").get<std::string>(), j.at("paragraph_id").get<std::string>(),
                                     j.at("iwqs").get<int>(), j.at("fwqs").get<int>());
      reply(res, 200, {{"seq", seq}});
    });
  });

  server.Get("/api/preference/next", [&store](const httplib::Request& req, httplib::Response& res) {
    guarded(res, [&] {
      auto t = store.next_triplet(detail::required_param(req, "judge"));
      if (!t) return reply(res, 200, {{"triplet_id", nullptr}});
      reply(res, 200, {{"triplet_id", t->triplet_id}, {"texts", t->texts}});
    });
  });

  server.Post("/api/preference/rank", [&store](const httplib::Request& req, httplib::Response& res) {
    guarded(res, [&] {
      auto j = json::parse(req.body);
      auto seq = store.submit_ranking(j.at("judge").get<std::string>(), j.at("triplet_id").get<std::string>(),
                                      j.at("ranks").get<std::vector<int>>());
      reply(res, 200, {{"seq", seq}});
    });
  });

  server.Get("/api/export", [&store](const httplib::Request& req, httplib::Response& res) {
    guarded(res, [&] {
      const auto scope = detail::required_param(req, "scope");
      if (scope == "edits") {
        res.set_content(store.export_edits(), "application/x-ndjson");
      } else if (scope == "rankings") {
        res.set_content(store.export_rankings(), "application/x-ndjson");
      } else {
        throw bad_request("scope must be 'edits' or 'rankings'");
      }
    });
  });

  if (!static_dir.empty() && !server.set_mount_point("/", static_dir)) {
    throw CorpusError("cannot serve UI directory '" + static_dir + "'");
  }
}

}  // namespace lamp::annotsvc
