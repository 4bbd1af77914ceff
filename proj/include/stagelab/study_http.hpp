#pragma once

// HTTP routes for the reader study.
//   POST /sessions                 demographics -> session
//   GET  /sessions/{id}/next       current item view
//   POST /sessions/{id}/responses  response for the current item -> ack
//   GET  /export                   survey response file (JSONL)
//   GET  /healthz
//   GET  /images/...               static images

#include <filesystem>
#include <string>

#include "stagelab/study.hpp"

// Include after any Eigen header: <resolv.h>, pulled in here, defines `_res`.
#include "httplib.h"

namespace stagelab {

namespace detail {

inline void send_json(httplib::Response& res, int status, const Json& body) {
  res.status = status;
  res.set_content(body.dump(), "application/json");
}

template <class Handler>
void guarded(httplib::Response& res, Handler&& handler) {
  try {
    handler();
  } catch (const StudyError& e) {
    send_json(res, e.status(), Json{{"error", e.what()}});
  } catch (const Error& e) {
    send_json(res, 500, Json{{"error", e.what()}});
  }
}

inline Json parse_body(const httplib::Request& req) {
  try {
    return Json::parse(req.body);
  } catch (const Json::parse_error&) {
    throw StudyError(400, "request body is not valid JSON");
  }
}

}  // namespace detail

inline void mount_study_routes(httplib::Server& server, Study& study, const std::filesystem::path& image_root) {
  server.Post("/sessions", [&study](const httplib::Request& req, httplib::Response& res) {
    detail::guarded(res, [&] { detail::send_json(res, 201, study.create_session(detail::parse_body(req))); });
  });
  server.Get(R"(/sessions/([A-Za-z0-9_-]+)/next)", [&study](const httplib::Request& req, httplib::Response& res) {
    detail::guarded(res, [&] { detail::send_json(res, 200, study.next_item(req.matches[1])); });
  });
  server.Post(R"(/sessions/([A-Za-z0-9_-]+)/responses)", [&study](const httplib::Request& req, httplib::Response& res) {
    detail::guarded(res, [&] { detail::send_json(res, 200, study.submit(req.matches[1], detail::parse_body(req))); });
  });
  server.Get("/export", [&study](const httplib::Request&, httplib::Response& res) {
    detail::guarded(res, [&] { res.set_content(study.export_text(), "application/x-ndjson"); });
  });
  server.Get("/healthz", [&study](const httplib::Request&, httplib::Response& res) {
    detail::guarded(res, [&] { detail::send_json(res, 200, study.health()); });
  });
  if (!image_root.empty() && !server.set_mount_point("/images", image_root.string()))
    throw IoError("cannot serve images from '" + image_root.string() + "'");
}

}  // namespace stagelab
