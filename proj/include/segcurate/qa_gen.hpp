#pragma once

#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "segcurate/dataset.hpp"
#include "segcurate/error.hpp"
#include "segcurate/mask.hpp"

namespace segcurate {

enum class QaMode { SingleTarget, MultiTarget, CategoryAssignment };
std::string_view to_string(QaMode mode);
QaMode parse_qa_mode(std::string_view text);  // throws UnknownMode

struct QaStyle {
  Reasoning reasoning = Reasoning::Explicit;
  Linguistic linguistic = Linguistic::Short;
};

struct PromptRequest {
  std::string id;
  QaMode mode = QaMode::SingleTarget;
  std::optional<std::string> category;
  QaStyle style;
  std::vector<BBox> regions;  // target boxes
  std::string mask_ref;       // optional reference to the mask(s), e.g. a file or record id
  std::string image_path;
};

struct GenerationConfig {
  std::string endpoint;
  std::string model;
  double temperature = 1.0;
  bool reasoning_trace = true;
  bool embed_image = false;  // send the image as base64 instead of its path
  std::string api_key_env = "SEGCURATE_API_KEY";
  int retries = 0;  // at most one retry is honoured
  double timeout_seconds = 120.0;
};

struct ParsedResponse {
  std::string question;
  std::string answer;
  std::string category;
  std::vector<std::string> warnings;
};

struct GeneratedQA {
  std::string id;
  std::string question;
  std::string answer;
  std::optional<std::string> category;
  bool out_of_vocabulary = false;
  std::string raw_response;
  std::vector<std::string> warnings;
};

// Failure carrying the provider's raw text so it can be routed to review.
class GenerationError : public Error {
 public:
  GenerationError(ErrorCode code, const std::string& message, std::string raw)
      : Error(code, message), raw_(std::move(raw)) {}
  const std::string& raw_response() const noexcept { return raw_; }

 private:
  std::string raw_;
};

// Deterministic template instantiation. Throws MissingCategory when a QA mode
// lacks its category and InvalidArgument when category assignment carries one.
std::string build_prompt(const PromptRequest& req, bool reasoning_trace = true);

// Pulls the first fenced JSON object holding the keys required by `mode` out
// of free text. Throws GenerationError(ParseFailure).
ParsedResponse parse_response(const std::string& text, QaMode mode);

// Text payload of a provider response: common JSON envelopes are unwrapped,
// anything else is returned unchanged.
std::string extract_response_text(const std::string& body);

struct HttpReply {
  int status = 0;
  std::string body;
};

class GenerationClient {
 public:
  virtual ~GenerationClient() = default;
  // Throws GenerationError(Transport) when the endpoint cannot be reached.
  virtual HttpReply send(const nlohmann::json& request) = 0;
};

class HttpGenerationClient : public GenerationClient {
 public:
  explicit HttpGenerationClient(GenerationConfig config);
  HttpReply send(const nlohmann::json& request) override;

 private:
  GenerationConfig config_;
};

// Canned, deterministic responses derived from the prompt; needs no network.
class MockGenerationClient : public GenerationClient {
 public:
  MockGenerationClient() = default;
  // Always answers with `fixed_body` and `status`.
  MockGenerationClient(std::string fixed_body, int status = 200);
  HttpReply send(const nlohmann::json& request) override;

  std::size_t calls() const;
  std::vector<nlohmann::json> requests() const;

 private:
  std::optional<HttpReply> fixed_;
  mutable std::mutex mu_;
  std::vector<nlohmann::json> requests_;
};

nlohmann::json build_request(const PromptRequest& req, const GenerationConfig& cfg);

GeneratedQA generate(const PromptRequest& req, const GenerationConfig& cfg,
                     GenerationClient& client);

// Append-only, thread-safe collection of items routed to human review.
class ReviewRoutingSink {
 public:
  void append(nlohmann::json entry);
  std::vector<nlohmann::json> entries() const;

 private:
  mutable std::mutex mu_;
  std::vector<nlohmann::json> entries_;
};

struct BatchOutcome {
  std::string id;
  std::optional<GeneratedQA> result;
  std::optional<ErrorCode> error;
  std::string message;
  std::string raw_response;
};

// At most `in_flight` requests run concurrently. Parse failures and
// out-of-vocabulary categories are appended to `sink`.
std::vector<BatchOutcome> generate_batch(const std::vector<PromptRequest>& requests,
                                         const GenerationConfig& cfg, GenerationClient& client,
                                         ReviewRoutingSink& sink, unsigned in_flight = 4);

void from_json(const nlohmann::json& j, PromptRequest& r);
void to_json(nlohmann::json& j, const GeneratedQA& qa);
void to_json(nlohmann::json& j, const BatchOutcome& o);

}  // namespace segcurate
