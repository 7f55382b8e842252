#define CPPHTTPLIB_OPENSSL_SUPPORT
#include "httplib.h"

#include <cstdlib>

#include "json.hpp"
#include "mira/guidance.hpp"

namespace mira {

using json = nlohmann::json;

namespace {

constexpr const char* kDefaultPrompt =
    "You are guiding an agent in a grid world. You see only what the agent sees.\n"
    "{env_description}\n"
    "Current task phase: {phase}\n"
    "Recent observations:\n{observations}\n"
    "Reply with one JSON object, either {\"type\":\"plan\",\"subgoal\":\"<short subgoal>\","
    "\"actions\":[<action names>]} for a short plan, or {\"type\":\"control\",\"action\":"
    "\"<action name>\"} naming an action to discourage.";

}  // namespace

HttpProvider::HttpProvider(HttpProviderConfig cfg) : cfg_(std::move(cfg)) {
  if (cfg_.prompt_template.empty()) cfg_.prompt_template = kDefaultPrompt;
}

std::string HttpProvider::request_body(const QueryContext& ctx, int k) const {
  json body;
  body["model"] = cfg_.model;
  body["n"] = k;
  body["temperature"] = cfg_.temperature;
  body["logprobs"] = true;
  body["messages"] = json::array({{{"role", "user"}, {"content", render_prompt(cfg_.prompt_template, ctx)}}});
  return body.dump();
}

std::vector<Completion> HttpProvider::parse_response(const std::string& body) {
  const json j = json::parse(body, nullptr, false);
  if (j.is_discarded() || !j.contains("choices") || !j["choices"].is_array()) {
    throw TransportError("response is not a chat-completions body");
  }
  std::vector<Completion> out;
  for (const auto& choice : j["choices"]) {
    Completion c;
    if (choice.contains("message") && choice["message"].contains("content") &&
        choice["message"]["content"].is_string()) {
      c.text = choice["message"]["content"].get<std::string>();
    }
    if (choice.contains("logprobs") && choice["logprobs"].is_object() &&
        choice["logprobs"].contains("content") && choice["logprobs"]["content"].is_array()) {
      for (const auto& tok : choice["logprobs"]["content"]) {
        if (tok.contains("logprob") && tok["logprob"].is_number()) c.logprobs.push_back(tok["logprob"].get<double>());
      }
    }
    out.push_back(std::move(c));
  }
  return out;
}

std::vector<Completion> HttpProvider::complete(const QueryContext& ctx, int k, Rng&) {
  const char* key = std::getenv("MIRA_LLM_API_KEY");
  if (!key || !*key) throw ConfigError("http provider needs MIRA_LLM_API_KEY in the environment");
  httplib::Client cli(cfg_.base_url);
  cli.set_connection_timeout(cfg_.timeout_s);
  cli.set_read_timeout(cfg_.timeout_s);
  httplib::Headers headers{{"Authorization", std::string("Bearer ") + key}};
  auto res = cli.Post(cfg_.path, headers, request_body(ctx, k), "application/json");
  if (!res) throw TransportError("http request failed: " + httplib::to_string(res.error()));
  if (res->status != 200) {
    throw TransportError("http status " + std::to_string(res->status) + " from " + cfg_.base_url);
  }
  return parse_response(res->body);
}

}  // namespace mira
