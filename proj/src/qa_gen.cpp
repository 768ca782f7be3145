#include "segcurate/qa_gen.hpp"

#include <httplib.h>

#include <algorithm>
#include <cctype>
#include <cstdlib>
#include <fstream>
#include <sstream>

#include "segcurate/parallel.hpp"
#include "segcurate/prompt_assets.hpp"

namespace segcurate {
namespace {

std::string trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r\n");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r\n");
  return std::string(s.substr(first, last - first + 1));
}

void replace_all(std::string& text, std::string_view slot, std::string_view value) {
  for (std::size_t pos = text.find(slot); pos != std::string::npos;
       pos = text.find(slot, pos + value.size())) {
    text.replace(pos, slot.size(), value);
  }
}

std::string describe_regions(const std::vector<BBox>& regions, const std::string& mask_ref) {
  std::ostringstream out;
  for (std::size_t i = 0; i < regions.size(); ++i) {
    const BBox& b = regions[i];
    if (i > 0) out << "; ";
    out << "box [x_min=" << b.x_min << ", y_min=" << b.y_min << ", x_max=" << b.x_max
        << ", y_max=" << b.y_max << "]";
  }
  if (!mask_ref.empty()) {
    if (!regions.empty()) out << "; ";
    out << "mask " << mask_ref;
  }
  return out.str();
}

std::string_view reasoning_clause(Reasoning r) {
  return r == Reasoning::Explicit
             ? "Explicit style: the question names the target directly through its category and "
               "visible attributes such as shape, color, size or position."
             : "Implicit style: the question must not name the target category; it describes a "
               "purpose, function or situation so that identifying the target requires reasoning.";
}

std::string_view length_clause(Linguistic l) {
  return l == Linguistic::Short
             ? "Concise: the question has fewer than 20 words."
             : "Detailed: the question has at least 20 words and describes context and "
               "surroundings.";
}

constexpr std::string_view kTraceClause =
    "Reason step by step about the image before answering, then give the final result.\n";

// Splits free text into the contents of ``` fenced blocks, dropping an
// optional language tag on the opening fence line.
std::vector<std::string> fenced_blocks(const std::string& text) {
  std::vector<std::string> blocks;
  std::size_t pos = 0;
  while (true) {
    const std::size_t open = text.find("```", pos);
    if (open == std::string::npos) break;
    std::size_t body = open + 3;
    const std::size_t eol = text.find('\n', body);
    const std::string tag = trim(text.substr(body, eol == std::string::npos ? 0 : eol - body));
    if (eol != std::string::npos &&
        std::all_of(tag.begin(), tag.end(), [](unsigned char c) { return std::isalnum(c) != 0; })) {
      body = eol + 1;
    }
    const std::size_t close = text.find("```", body);
    if (close == std::string::npos) break;
    blocks.push_back(text.substr(body, close - body));
    pos = close + 3;
  }
  return blocks;
}

std::string read_binary(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::Io, "cannot read image '" + path + "'");
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

struct Endpoint {
  std::string base;  // scheme://host[:port]
  std::string path;
};

Endpoint split_endpoint(const std::string& url) {
  const std::size_t scheme = url.find("://");
  if (scheme == std::string::npos) {
    throw Error(ErrorCode::InvalidArgument, "endpoint must be an absolute URL: " + url);
  }
  const std::size_t slash = url.find('/', scheme + 3);
  if (slash == std::string::npos) return {url, "/"};
  return {url.substr(0, slash), url.substr(slash)};
}

std::uint64_t fnv1a(std::string_view s) {
  std::uint64_t h = 1469598103934665603ULL;
  for (const char c : s) {
    h ^= static_cast<unsigned char>(c);
    h *= 1099511628211ULL;
  }
  return h;
}

std::string line_value(const std::string& prompt, std::string_view key) {
  const std::size_t pos = prompt.find(key);
  if (pos == std::string::npos) return {};
  const std::size_t start = pos + key.size();
  return trim(prompt.substr(start, prompt.find('\n', start) - start));
}

}  // namespace

std::string_view to_string(QaMode mode) {
  switch (mode) {
    case QaMode::SingleTarget: return "single_target";
    case QaMode::MultiTarget: return "multi_target";
    case QaMode::CategoryAssignment: return "category_assignment";
  }
  return "?";
}

QaMode parse_qa_mode(std::string_view text) {
  for (const QaMode m : {QaMode::SingleTarget, QaMode::MultiTarget, QaMode::CategoryAssignment}) {
    if (to_string(m) == text) return m;
  }
  throw Error(ErrorCode::UnknownMode, "unknown prompt mode '" + std::string(text) + "'");
}

std::string build_prompt(const PromptRequest& req, bool reasoning_trace) {
  std::string text;
  switch (req.mode) {
    case QaMode::SingleTarget: text = prompts::k_single_target; break;
    case QaMode::MultiTarget: text = prompts::k_multi_target; break;
    case QaMode::CategoryAssignment: text = prompts::k_category_assignment; break;
  }
  const bool needs_category = req.mode != QaMode::CategoryAssignment;
  const bool has_category = req.category && !trim(*req.category).empty();
  if (needs_category && !has_category) {
    throw Error(ErrorCode::MissingCategory,
                std::string(to_string(req.mode)) + " prompt needs a category");
  }
  if (!needs_category && has_category) {
    throw Error(ErrorCode::InvalidArgument, "category assignment prompt must not carry a category");
  }
  if (req.regions.empty() && req.mask_ref.empty()) {
    throw Error(ErrorCode::InvalidArgument, "prompt needs a target region (bbox or mask reference)");
  }

  replace_all(text, "{{image}}", req.image_path);
  replace_all(text, "{{region}}", describe_regions(req.regions, req.mask_ref));
  replace_all(text, "{{target_count}}", std::to_string(req.regions.size()));
  replace_all(text, "{{trace_clause}}", reasoning_trace ? kTraceClause : "");
  if (needs_category) {
    replace_all(text, "{{category}}", trim(*req.category));
    replace_all(text, "{{reasoning_clause}}", reasoning_clause(req.style.reasoning));
    replace_all(text, "{{length_clause}}", length_clause(req.style.linguistic));
  }
  if (text.find("{{") != std::string::npos) {
    throw Error(ErrorCode::InvalidArgument, "prompt template has an unfilled slot");
  }
  return text;
}

ParsedResponse parse_response(const std::string& text, QaMode mode) {
  ParsedResponse out;
  std::vector<nlohmann::json> objects;
  for (const auto& block : fenced_blocks(text)) {
    const auto parsed = nlohmann::json::parse(block, nullptr, false);
    if (!parsed.is_discarded() && parsed.is_object()) objects.push_back(parsed);
  }
  const auto has_keys = [mode](const nlohmann::json& o) {
    const auto str = [&o](const char* key) { return o.contains(key) && o[key].is_string(); };
    return mode == QaMode::CategoryAssignment ? str("category") : str("question") && str("answer");
  };
  const auto chosen = std::find_if(objects.begin(), objects.end(), has_keys);
  if (chosen == objects.end()) {
    throw GenerationError(ErrorCode::ParseFailure,
                          "no fenced JSON object with the required keys", text);
  }
  if (objects.size() > 1) {
    out.warnings.push_back(std::to_string(objects.size()) +
                           " fenced JSON objects in response; using the first with the required keys");
  }
  if (mode == QaMode::CategoryAssignment) {
    out.category = trim((*chosen)["category"].get<std::string>());
    if (out.category.empty()) throw GenerationError(ErrorCode::ParseFailure, "empty category", text);
  } else {
    out.question = trim((*chosen)["question"].get<std::string>());
    out.answer = trim((*chosen)["answer"].get<std::string>());
    if (out.question.empty() || out.answer.empty()) {
      throw GenerationError(ErrorCode::ParseFailure, "empty question or answer", text);
    }
  }
  return out;
}

std::string extract_response_text(const std::string& body) {
  const auto j = nlohmann::json::parse(body, nullptr, false);
  if (j.is_discarded()) return body;
  if (j.is_string()) return j.get<std::string>();
  const std::vector<nlohmann::json::json_pointer> paths{
      nlohmann::json::json_pointer("/text"),
      nlohmann::json::json_pointer("/output"),
      nlohmann::json::json_pointer("/response"),
      nlohmann::json::json_pointer("/candidates/0/content/parts/0/text"),
      nlohmann::json::json_pointer("/choices/0/message/content"),
  };
  for (const auto& p : paths) {
    if (j.contains(p) && j.at(p).is_string()) return j.at(p).get<std::string>();
  }
  return body;
}

HttpGenerationClient::HttpGenerationClient(GenerationConfig config) : config_(std::move(config)) {}

HttpReply HttpGenerationClient::send(const nlohmann::json& request) {
  Endpoint ep;
  try {
    ep = split_endpoint(config_.endpoint);
  } catch (const Error& e) {
    throw GenerationError(ErrorCode::Transport, e.what(), "");
  }
  httplib::Client client(ep.base);
  const auto seconds = static_cast<time_t>(config_.timeout_seconds);
  client.set_connection_timeout(std::min<time_t>(seconds, 10), 0);
  client.set_read_timeout(seconds, 0);
  httplib::Headers headers;
  if (!config_.api_key_env.empty()) {
    if (const char* key = std::getenv(config_.api_key_env.c_str()); key && *key) {
      headers.emplace("Authorization", std::string("Bearer ") + key);
    }
  }
  auto res = client.Post(ep.path, headers, request.dump(), "application/json");
  if (!res) {
    throw GenerationError(ErrorCode::Transport,
                          "request to " + config_.endpoint + " failed: " + httplib::to_string(res.error()),
                          "");
  }
  return {res->status, res->body};
}

MockGenerationClient::MockGenerationClient(std::string fixed_body, int status)
    : fixed_(HttpReply{status, std::move(fixed_body)}) {}

HttpReply MockGenerationClient::send(const nlohmann::json& request) {
  {
    std::lock_guard lock(mu_);
    requests_.push_back(request);
  }
  if (fixed_) return *fixed_;
  const std::string prompt = request.value("prompt", "");
  const std::uint64_t h = fnv1a(prompt);
  nlohmann::json payload;
  if (prompt.find("Masked region:") != std::string::npos) {
    const auto& vocab = category_vocabulary();
    payload["category"] = std::string(vocab[h % vocab.size()]);
  } else {
    const std::string category = line_value(prompt, "Target category:");
    const bool multi = prompt.find("Target regions (") != std::string::npos;
    payload["question"] = multi ? "Segment all of the " + category + " objects in this image."
                                : "Segment the " + category + " in this image.";
    payload["answer"] = "The requested " + category + (multi ? " objects are" : " is") +
                        " highlighted [variant " + std::to_string(h % 1000) + "].";
  }
  return {200, "Reasoning omitted by the mock client.\n```json\n" + payload.dump() + "\n```\n"};
}

std::size_t MockGenerationClient::calls() const {
  std::lock_guard lock(mu_);
  return requests_.size();
}

std::vector<nlohmann::json> MockGenerationClient::requests() const {
  std::lock_guard lock(mu_);
  return requests_;
}

nlohmann::json build_request(const PromptRequest& req, const GenerationConfig& cfg) {
  if (cfg.temperature < 0.0) throw Error(ErrorCode::InvalidArgument, "temperature must be >= 0");
  nlohmann::json body{{"model", cfg.model},
                      {"prompt", build_prompt(req, cfg.reasoning_trace)},
                      {"temperature", cfg.temperature}};
  if (!req.image_path.empty()) {
    if (cfg.embed_image) {
      body["image"] = {{"base64", httplib::detail::base64_encode(read_binary(req.image_path))}};
    } else {
      body["image"] = {{"path", req.image_path}};
    }
  }
  return body;
}

GeneratedQA generate(const PromptRequest& req, const GenerationConfig& cfg,
                     GenerationClient& client) {
  const nlohmann::json body = build_request(req, cfg);
  const int attempts = 1 + std::clamp(cfg.retries, 0, 1);
  HttpReply reply;
  for (int attempt = 0; attempt < attempts; ++attempt) {
    const bool last = attempt + 1 == attempts;
    try {
      reply = client.send(body);
    } catch (const GenerationError&) {
      if (last) throw;
      continue;
    }
    if (reply.status >= 200 && reply.status < 300) break;
    if (last || reply.status < 500) {
      throw GenerationError(ErrorCode::NonOkStatus,
                            "endpoint answered HTTP " + std::to_string(reply.status), reply.body);
    }
  }

  const std::string text = extract_response_text(reply.body);
  ParsedResponse parsed;
  try {
    parsed = parse_response(text, req.mode);
  } catch (const GenerationError& e) {
    // keep the provider body, not just the unwrapped text
    throw GenerationError(ErrorCode::ParseFailure, e.what(), reply.body);
  }
  GeneratedQA qa;
  qa.id = req.id;
  qa.raw_response = reply.body;
  qa.warnings = std::move(parsed.warnings);
  if (req.mode == QaMode::CategoryAssignment) {
    qa.category = parsed.category;
    qa.out_of_vocabulary = !is_known_category(parsed.category);
  } else {
    qa.question = std::move(parsed.question);
    qa.answer = std::move(parsed.answer);
    qa.category = req.category;
  }
  return qa;
}

void ReviewRoutingSink::append(nlohmann::json entry) {
  std::lock_guard lock(mu_);
  entries_.push_back(std::move(entry));
}

std::vector<nlohmann::json> ReviewRoutingSink::entries() const {
  std::lock_guard lock(mu_);
  return entries_;
}

std::vector<BatchOutcome> generate_batch(const std::vector<PromptRequest>& requests,
                                         const GenerationConfig& cfg, GenerationClient& client,
                                         ReviewRoutingSink& sink, unsigned in_flight) {
  std::vector<BatchOutcome> outcomes(requests.size());
  parallel_for(requests.size(), in_flight, [&](std::size_t i) {
    BatchOutcome& o = outcomes[i];
    o.id = requests[i].id;
    try {
      o.result = generate(requests[i], cfg, client);
      if (o.result->out_of_vocabulary) {
        sink.append({{"id", o.id},
                     {"reason", "out_of_vocabulary"},
                     {"category", *o.result->category},
                     {"raw_response", o.result->raw_response}});
      }
    } catch (const GenerationError& e) {
      o.error = e.code();
      o.message = e.what();
      o.raw_response = e.raw_response();
      if (e.code() == ErrorCode::ParseFailure) {
        sink.append({{"id", o.id}, {"reason", "parse_failure"}, {"raw_response", e.raw_response()}});
      }
    } catch (const Error& e) {
      o.error = e.code();
      o.message = e.what();
    }
  });
  return outcomes;
}

void from_json(const nlohmann::json& j, PromptRequest& r) {
  try {
    r.id = j.value("id", "");
    r.mode = parse_qa_mode(j.at("mode").get<std::string>());
    if (j.contains("category") && !j["category"].is_null()) r.category = j["category"].get<std::string>();
    if (j.contains("style")) {
      const auto& s = j["style"];
      const std::string reasoning = s.value("reasoning", "explicit");
      const std::string linguistic = s.value("linguistic", "short");
      if (reasoning != "explicit" && reasoning != "implicit") {
        throw Error(ErrorCode::InvalidArgument, "style.reasoning must be explicit|implicit");
      }
      if (linguistic != "short" && linguistic != "long") {
        throw Error(ErrorCode::InvalidArgument, "style.linguistic must be short|long");
      }
      r.style.reasoning = reasoning == "explicit" ? Reasoning::Explicit : Reasoning::Implicit;
      r.style.linguistic = linguistic == "short" ? Linguistic::Short : Linguistic::Long;
    }
    if (j.contains("bboxes")) r.regions = j["bboxes"].get<std::vector<BBox>>();
    r.mask_ref = j.value("mask_ref", "");
    r.image_path = j.value("image_path", "");
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::InvalidArgument, std::string("bad prompt request: ") + e.what());
  }
}

void to_json(nlohmann::json& j, const GeneratedQA& qa) {
  j = nlohmann::json{{"id", qa.id},
                     {"question", qa.question},
                     {"answer", qa.answer},
                     {"out_of_vocabulary", qa.out_of_vocabulary},
                     {"raw_response", qa.raw_response},
                     {"warnings", qa.warnings}};
  j["category"] = qa.category ? nlohmann::json(*qa.category) : nlohmann::json(nullptr);
}

void to_json(nlohmann::json& j, const BatchOutcome& o) {
  if (o.result) {
    j = *o.result;
    j["status"] = "ok";
    return;
  }
  j = nlohmann::json{{"id", o.id},
                     {"status", "error"},
                     {"error", o.error ? std::string(to_string(*o.error)) : std::string()},
                     {"message", o.message},
                     {"raw_response", o.raw_response}};
}

}  // namespace segcurate
