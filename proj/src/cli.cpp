#include "segcurate/cli.hpp"

#include <CLI11.hpp>

#include <filesystem>
#include <fstream>
#include <map>
#include <memory>
#include <optional>
#include <sstream>

#include "segcurate/curation.hpp"
#include "segcurate/dataset.hpp"
#include "segcurate/error.hpp"
#include "segcurate/losses.hpp"
#include "segcurate/metrics.hpp"
#include "segcurate/parallel.hpp"
#include "segcurate/qa_gen.hpp"
#include "segcurate/query_match.hpp"
#include "segcurate/review.hpp"
#include "segcurate/review_http.hpp"
#include "segcurate/tensor.hpp"

namespace segcurate {
namespace {

using nlohmann::json;

std::string read_text(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::Io, "cannot read '" + path + "'");
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

json read_json(const std::string& path) {
  auto j = json::parse(read_text(path), nullptr, false);
  if (j.is_discarded()) throw Error(ErrorCode::InvalidArgument, "'" + path + "' is not valid JSON");
  return j;
}

std::vector<json> read_jsonl(const std::string& path) {
  std::istringstream in(read_text(path));
  std::vector<json> rows;
  std::string line;
  for (std::size_t n = 1; std::getline(in, line); ++n) {
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    auto j = json::parse(line, nullptr, false);
    if (j.is_discarded()) {
      throw Error(ErrorCode::InvalidArgument,
                  path + ":" + std::to_string(n) + ": line is not valid JSON");
    }
    rows.push_back(std::move(j));
  }
  return rows;
}

// A file holding one JSON document or JSON lines.
std::vector<json> read_objects(const std::string& path) {
  const auto whole = json::parse(read_text(path), nullptr, false);
  if (!whole.is_discarded()) {
    if (whole.is_array()) return whole.get<std::vector<json>>();
    return {whole};
  }
  return read_jsonl(path);
}

BinaryMask decode(const json& j) { return rle_decode(j.get<RleMask>()); }

// Union of every mask in `list`; all masks must share a shape.
BinaryMask union_of(const std::vector<RleMask>& list) {
  if (list.empty()) throw Error(ErrorCode::EmptyMask, "no masks to combine");
  BinaryMask acc = rle_decode(list.front());
  for (std::size_t i = 1; i < list.size(); ++i) {
    const BinaryMask m = rle_decode(list[i]);
    if (m.height() != acc.height() || m.width() != acc.width()) {
      throw Error(ErrorCode::ShapeMismatch, "masks of one record differ in size");
    }
    for (std::size_t p = 0; p < m.size(); ++p) {
      if (m.pixels()[p] != 0) {
        acc.set(static_cast<int>(p / static_cast<std::size_t>(m.width())),
                static_cast<int>(p % static_cast<std::size_t>(m.width())), 1);
      }
    }
  }
  return acc;
}

std::vector<RleMask> mask_list(const json& j) {
  if (j.is_array()) return j.get<std::vector<RleMask>>();
  if (j.contains("masks")) return j["masks"].get<std::vector<RleMask>>();
  if (j.contains("mask")) return {j["mask"].get<RleMask>()};
  return {j.get<RleMask>()};
}

// Sink for --out: stdout unless a path is given.
class Output {
 public:
  Output(const std::string& path, std::ostream& fallback) : os_(&fallback) {
    if (!path.empty()) {
      file_.open(path, std::ios::binary | std::ios::trunc);
      if (!file_) throw Error(ErrorCode::Io, "cannot write '" + path + "'");
      os_ = &file_;
    }
  }
  template <typename J>
  void doc(const J& j) {
    *os_ << j.dump(2) << '\n';
  }
  template <typename J>
  void line(const J& j) {
    *os_ << j.dump() << '\n';
  }
  void text(const std::string& s) { *os_ << s; }

 private:
  std::ofstream file_;
  std::ostream* os_;
};

nlohmann::ordered_json points_json(const std::vector<PointPrompt>& points) {
  auto list = nlohmann::ordered_json::array();
  for (const auto& p : points) list.push_back({{"x", p.x}, {"y", p.y}});
  return list;
}

struct Globals {
  std::string out;
  unsigned jobs = default_jobs();
};

// ---- grid ----------------------------------------------------------------

int cmd_grid_global(const Globals& g, std::ostream& out, int width, int height) {
  nlohmann::ordered_json j;
  j["R"] = 4;
  j["C"] = 4;
  j["points"] = points_json(global_grid(width, height));
  Output(g.out, out).doc(j);
  return kExitOk;
}

int cmd_grid_local(const Globals& g, std::ostream& out, int h, int w, std::optional<int> x0,
                   std::optional<int> y0) {
  const GridSpec spec = local_grid(h, w);
  nlohmann::ordered_json j;
  j["R"] = spec.rows;
  j["C"] = spec.cols;
  Output o(g.out, out);
  if (x0 || y0) {
    j["points"] = points_json(local_points(x0.value_or(0), y0.value_or(0), h, w));
    o.doc(j);
  } else {
    o.line(j);  // compact, R before C
  }
  return kExitOk;
}

// ---- filter --------------------------------------------------------------

int cmd_derive_stats(const Globals& g, std::ostream& out, const std::string& gold_path,
                     std::string category) {
  std::vector<BinaryMask> gold;
  for (const auto& row : read_objects(gold_path)) {
    if (category.empty() && row.contains("category")) category = row["category"].get<std::string>();
    gold.push_back(decode(row.contains("mask") ? row["mask"] : row));
  }
  Output(g.out, out).doc(json(derive_reference_stats(gold, category)));
  return kExitOk;
}

int cmd_filter_run(const Globals& g, std::ostream& out, std::ostream& err,
                   const std::string& items_path, const std::vector<std::string>& stats_paths,
                   double k_sigma, const std::vector<std::string>& overrides, int connectivity) {
  std::map<std::string, ReferenceStats> stats;
  for (const auto& p : stats_paths) {
    for (const auto& j : read_objects(p)) {
      ReferenceStats s = j.get<ReferenceStats>();
      stats[s.category] = std::move(s);
    }
  }
  Stage2Config cfg;
  cfg.k_sigma = k_sigma;
  cfg.jobs = g.jobs;
  cfg.connectivity = connectivity == 4 ? Connectivity::Four : Connectivity::Eight;
  for (const auto& o : overrides) {
    const auto eq = o.rfind('=');
    if (eq == std::string::npos) {
      throw Error(ErrorCode::InvalidArgument, "--k-sigma-for expects CATEGORY=K, got '" + o + "'");
    }
    cfg.k_sigma_by_category[o.substr(0, eq)] = std::stod(o.substr(eq + 1));
  }

  std::vector<Stage2Item> batch;
  for (const auto& row : read_objects(items_path)) {
    Stage2Item item{row.value("id", ""), decode(row.at("mask")), 0, row.value("category", "")};
    if (row.contains("bbox_count")) {
      item.bbox_count = row["bbox_count"].get<int>();
    } else {
      item.bbox_count = static_cast<int>(row.at("bboxes").size());
    }
    batch.push_back(std::move(item));
  }
  const Stage2Report report = run_stage2(batch, stats, cfg);
  Output o(g.out, out);
  for (const auto& r : report.items) o.line(json(r));
  err << json(report.summary).dump() << '\n';
  return kExitOk;
}

// ---- mask2bbox -----------------------------------------------------------

int cmd_mask2bbox(const Globals& g, std::ostream& out, const std::string& path, bool components,
                  int connectivity) {
  const BinaryMask mask = decode(read_json(path));
  Output o(g.out, out);
  if (!components) {
    o.line(json(mask_to_bbox(mask)));
    return kExitOk;
  }
  const auto labeling = connected_components(
      mask, connectivity == 4 ? Connectivity::Four : Connectivity::Eight);
  json list = json::array();
  for (int label = 1; label <= labeling.count; ++label) {
    list.push_back({{"label", label},
                    {"area", labeling.sizes[static_cast<std::size_t>(label - 1)]},
                    {"bbox", mask_to_bbox(extract_component(labeling, label))}});
  }
  o.doc(json{{"count", labeling.count}, {"components", list}});
  return kExitOk;
}

// ---- loss eval -----------------------------------------------------------

std::string_view to_string(SpatialSkip s) {
  switch (s) {
    case SpatialSkip::None: return "none";
    case SpatialSkip::NoForeground: return "no_foreground";
    case SpatialSkip::NoBackground: return "no_background";
  }
  return "?";
}

std::vector<std::uint8_t> binary_targets(const json& j, std::size_t expected) {
  std::vector<std::uint8_t> t;
  if (j.contains("runs")) {
    const BinaryMask m = decode(j);
    t.assign(m.pixels().begin(), m.pixels().end());
  } else {
    const Tensor tensor = j.get<Tensor>();
    for (const double v : tensor.data) {
      if (v != 0.0 && v != 1.0) throw Error(ErrorCode::InvalidMask, "targets must be 0 or 1");
      t.push_back(static_cast<std::uint8_t>(v));
    }
  }
  if (t.size() != expected) {
    throw Error(ErrorCode::ShapeMismatch, "target size " + std::to_string(t.size()) +
                                              " differs from prediction size " +
                                              std::to_string(expected));
  }
  return t;
}

json evaluate_loss_sample(const json& s, const LossWeights& weights) {
  LossParts parts;
  json detail = json::object();

  if (s.contains("text_logits")) {
    const Tensor logits = s["text_logits"].get<Tensor>();
    if (logits.shape.size() != 2) throw Error(ErrorCode::ShapeMismatch, "text_logits must be [T, V]");
    const auto targets = s.at("text_targets").get<std::vector<long long>>();
    parts.text = token_ce(logits.data, logits.shape[1], targets,
                          s.value("ignore_id", kDefaultIgnoreId));
  }
  if (s.contains("mask_logits")) {
    const Tensor logits = s["mask_logits"].get<Tensor>();
    const auto targets = binary_targets(s.at("mask_target"), logits.data.size());
    parts.bce = bce_loss(logits.data, targets);
    std::vector<double> probs(logits.data.size());
    std::transform(logits.data.begin(), logits.data.end(), probs.begin(), sigmoid);
    parts.dice = dice_loss(probs, targets);
  }
  if (s.contains("attention")) {
    const Tensor a = s["attention"].get<Tensor>();
    if (a.shape.size() != 4 || a.shape[2] != a.shape[3]) {
      throw Error(ErrorCode::ShapeMismatch, "attention must be [M, N, d, d]");
    }
    const AttentionStack stack(static_cast<int>(a.shape[0]), static_cast<int>(a.shape[1]),
                               static_cast<int>(a.shape[2]), a.data);
    GroundTruthGrid grid;
    if (s.contains("gt_grid")) {
      grid.d = stack.d();
      grid.cells = binary_targets(s["gt_grid"], stack.cells());
    } else {
      grid = downsample_gt(decode(s.at("gt_mask")), stack.d());
    }
    const SpatialLoss ls = spatial_attention_loss(stack, grid, weights.epsilon_log);
    if (!ls.skipped()) parts.spatial = ls.value;
    detail = {{"skip", to_string(ls.skip)},
              {"background_mean", ls.background_mean},
              {"separation", ls.separation},
              {"clamped", ls.clamped}};
  }
  json report = total_loss(parts, weights);
  if (!detail.empty()) report["spatial"] = detail;
  return report;
}

int cmd_loss_eval(const Globals& g, std::ostream& out, const std::string& path,
                  const std::optional<std::string>& weights_path,
                  const std::optional<double>& lambda_s) {
  const json input = read_json(path);
  LossWeights weights;
  if (weights_path) weights = read_json(*weights_path).get<LossWeights>();
  if (lambda_s) weights.lambda_s = *lambda_s;

  Output o(g.out, out);
  if (!input.is_array()) {
    LossWeights w = input.contains("weights") && !weights_path && !lambda_s
                        ? input["weights"].get<LossWeights>()
                        : weights;
    o.doc(evaluate_loss_sample(input, w));
    return kExitOk;
  }
  // batch: per-sample reports plus their mean
  json samples = json::array();
  double sums[5] = {0, 0, 0, 0, 0};
  for (const auto& s : input) {
    json r = evaluate_loss_sample(s, weights);
    sums[0] += r["l_text"].get<double>();
    sums[1] += r["l_bce"].get<double>();
    sums[2] += r["l_dice"].get<double>();
    sums[3] += r["l_spatial"].get<double>();
    sums[4] += r["total"].get<double>();
    samples.push_back(std::move(r));
  }
  const double n = input.empty() ? 1.0 : static_cast<double>(input.size());
  o.doc(json{{"samples", samples},
             {"mean",
              {{"l_text", sums[0] / n},
               {"l_bce", sums[1] / n},
               {"l_dice", sums[2] / n},
               {"l_spatial", sums[3] / n},
               {"total", sums[4] / n}}}});
  return kExitOk;
}

// ---- match / sweep -------------------------------------------------------

CandidateSet load_candidates(const json& j) {
  CandidateSet c;
  if (j.contains("shape")) {
    const Tensor t = j.get<Tensor>();
    if (t.shape.size() != 3) throw Error(ErrorCode::ShapeMismatch, "candidates must be [k, H, W]");
    c.height = static_cast<int>(t.shape[1]);
    c.width = static_cast<int>(t.shape[2]);
    const std::size_t cells = t.shape[1] * t.shape[2];
    for (std::size_t i = 0; i < t.shape[0]; ++i) {
      c.masks.emplace_back(t.data.begin() + static_cast<std::ptrdiff_t>(i * cells),
                           t.data.begin() + static_cast<std::ptrdiff_t>((i + 1) * cells));
    }
  } else {
    for (const auto& rle : mask_list(j)) {
      const BinaryMask m = rle_decode(rle);
      c.height = m.height();
      c.width = m.width();
      c.masks.emplace_back(m.pixels().begin(), m.pixels().end());
    }
  }
  c.validate();
  return c;
}

TargetSet load_targets(const json& j) {
  TargetSet t;
  for (const auto& rle : mask_list(j)) t.masks.push_back(rle_decode(rle));
  return t;
}

int cmd_match(const Globals& g, std::ostream& out, const std::string& cand_path,
              const std::string& target_path, const MatchWeights& weights) {
  const CandidateSet candidates = load_candidates(read_json(cand_path));
  const TargetSet targets = load_targets(read_json(target_path));
  CostCounter counter;
  Output(g.out, out).doc(json(select_masks(candidates, targets, counter, weights, g.jobs)));
  return kExitOk;
}

int cmd_sweep(const Globals& g, std::ostream& out, const std::string& target_path,
              std::uint64_t seed, const std::vector<std::size_t>& ks, const std::string& csv_path,
              bool timing) {
  const TargetSet targets = load_targets(read_json(target_path));
  const auto rows = sweep_queries(synthetic_candidates(targets, seed), targets, ks, {}, g.jobs);
  json list = json::array();
  for (const auto& r : rows) {
    json j = r;
    if (!timing) j.erase("wall_ms");
    list.push_back(std::move(j));
  }
  if (!csv_path.empty()) Output(csv_path, out).text(sweep_csv(rows));
  Output(g.out, out).doc(json{{"targets", targets.count()}, {"seed", seed}, {"rows", list}});
  return kExitOk;
}

// ---- dataset -------------------------------------------------------------

ValidationResult load_dataset(const std::string& path, unsigned jobs) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::Io, "cannot read '" + path + "'");
  return validate(in, jobs);
}

int cmd_eval(const Globals& g, std::ostream& out, std::ostream& err, const std::string& data_path,
             const std::string& pred_path, bool table) {
  const ValidationResult data = load_dataset(data_path, g.jobs);
  std::map<std::string, std::vector<RleMask>> preds;
  for (const auto& row : read_objects(pred_path)) {
    preds[row.at("id").get<std::string>()] = mask_list(row);
  }

  std::vector<LabeledOutcome> outcomes(data.records.size());
  std::vector<std::string> findings(data.records.size());
  parallel_for(data.records.size(), g.jobs, [&](std::size_t i) {
    const DatasetRecord& r = data.records[i];
    const BinaryMask gt = union_of(r.masks);
    BinaryMask pred(gt.height(), gt.width());
    if (const auto it = preds.find(r.id); it == preds.end()) {
      findings[i] = "no prediction for '" + r.id + "'; scored as empty";
    } else if (!it->second.empty()) {
      pred = union_of(it->second);
    }
    outcomes[i] = {r.id, score_overlap(pred, gt),
                   DimensionLabels{std::string(to_string(r.granularity)),
                                   std::string(to_string(r.multiplicity)),
                                   std::string(to_string(r.reasoning)),
                                   std::string(to_string(r.linguistic))}};
  });
  const DimensionReport report = dimension_report(outcomes);

  bool flagged = !data.issues.empty();
  for (const auto& issue : data.issues) err << "invalid record: " << json(issue).dump() << '\n';
  for (const auto& f : findings) {
    if (f.empty()) continue;
    flagged = true;
    err << f << '\n';
  }
  Output o(g.out, out);
  if (table) {
    o.text(render_table(report));
  } else {
    o.doc(json(report));
  }
  return flagged ? kExitFindings : kExitOk;
}

int cmd_stats(const Globals& g, std::ostream& out, std::ostream& err, const std::string& path,
              int threshold) {
  const ValidationResult data = load_dataset(path, g.jobs);
  json j = stats(data.records, threshold);
  j["rejected_records"] = data.issues.size();
  for (const auto& issue : data.issues) err << "invalid record: " << json(issue).dump() << '\n';
  Output(g.out, out).doc(j);
  return data.issues.empty() ? kExitOk : kExitFindings;
}

int cmd_validate(const Globals& g, std::ostream& out, const std::string& path, bool split) {
  const ValidationResult data = load_dataset(path, g.jobs);
  json j{{"valid_records", data.records.size()},
         {"issues", data.issues},
         {"warnings", data.warnings}};
  bool flagged = !data.issues.empty();
  if (split) {
    const SplitReport report = split_check(data.records);
    j["split"] = report;
    flagged = flagged || !report.clean();
  }
  j["ok"] = !flagged;
  Output(g.out, out).doc(j);
  return flagged ? kExitFindings : kExitOk;
}

// ---- qa-gen --------------------------------------------------------------

int cmd_qa_gen(const Globals& g, std::ostream& out, std::ostream& err, const std::string& path,
               const GenerationConfig& cfg, bool mock, const std::string& review_out,
               unsigned in_flight) {
  std::vector<PromptRequest> requests;
  for (const auto& row : read_objects(path)) requests.push_back(row.get<PromptRequest>());
  if (!mock && cfg.endpoint.empty()) {
    throw Error(ErrorCode::InvalidArgument, "--endpoint is required unless --mock is given");
  }
  std::unique_ptr<GenerationClient> client;
  if (mock) {
    client = std::make_unique<MockGenerationClient>();
  } else {
    client = std::make_unique<HttpGenerationClient>(cfg);
  }
  ReviewRoutingSink sink;
  const auto outcomes = generate_batch(requests, cfg, *client, sink, in_flight);

  Output o(g.out, out);
  std::size_t failures = 0;
  for (const auto& oc : outcomes) {
    o.line(json(oc));
    if (oc.error) ++failures;
  }
  const auto routed = sink.entries();
  if (!review_out.empty()) {
    Output r(review_out, out);
    for (const auto& e : routed) r.line(e);
  }
  err << json{{"requests", outcomes.size()}, {"failed", failures}, {"routed_to_review", routed.size()}}
             .dump()
      << '\n';
  return failures == 0 ? kExitOk : kExitFindings;
}

// ---- review --------------------------------------------------------------

std::unique_ptr<ReviewService> open_review(const std::string& log_path, ReviewOptions options) {
  if (!log_path.empty() && std::filesystem::exists(log_path)) {
    std::ifstream in(log_path);
    auto service = ReviewService::replay(in, std::move(options));
    service->attach_log(log_path);
    return service;
  }
  auto service = std::make_unique<ReviewService>(std::move(options));
  if (!log_path.empty()) service->attach_log(log_path);
  return service;
}

int cmd_review_serve(std::ostream& err, const std::string& items_path, const std::string& log_path,
                     const ReviewServerOptions& server_opts, double lease_minutes) {
  ReviewOptions options;
  options.lease_ttl_ms = static_cast<std::int64_t>(lease_minutes * 60'000.0);
  auto service = open_review(log_path, options);
  std::size_t added = 0;
  if (!items_path.empty()) {
    for (const auto& row : read_objects(items_path)) {
      ReviewItem item = row.get<ReviewItem>();
      if (service->contains(item.id)) continue;
      service->enqueue(std::move(item));
      ++added;
    }
  }
  ReviewHttpServer server(*service, server_opts);
  const int port = server.bind();
  err << "review service on http://" << server_opts.host << ":" << port << " (" << added
      << " new items)" << std::endl;
  server.serve();
  return kExitOk;
}

int cmd_audit(const Globals& g, std::ostream& out, const std::string& log_path, double fraction,
              std::uint64_t seed) {
  if (!std::filesystem::exists(log_path)) {
    throw Error(ErrorCode::Io, "review log '" + log_path + "' does not exist");
  }
  auto service = open_review(log_path, {});
  Output(g.out, out).doc(json(service->sample_audit(fraction, seed)));
  return kExitOk;
}

// Deepest subcommand that took part in the parse, for help on usage errors.
const CLI::App* deepest(const CLI::App* app) {
  for (const CLI::App* sub : app->get_subcommands()) return deepest(sub);
  return app;
}

}  // namespace

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Mask curation, loss evaluation, matching, metrics and review tooling", "segcurate"};
  app.require_subcommand(1);
  app.fallthrough();
  app.set_config("--config", "", "TOML/INI file with option defaults; flags override it");
  app.allow_config_extras(CLI::config_extras_mode::error);

  Globals g;
  app.add_option("--out", g.out, "Write the result to this path instead of stdout");
  app.add_option("--jobs", g.jobs, "Worker threads for batch work")->check(CLI::PositiveNumber);

  std::function<int()> action;
  const auto bind = [&action](CLI::App* sub, std::function<int()> fn) {
    sub->callback([&action, fn = std::move(fn)] { action = fn; });
  };

  // grid
  auto* grid = app.add_subcommand("grid", "Point-prompt grids");
  grid->require_subcommand(1);
  int gw = 0, gh = 0;
  auto* grid_global = grid->add_subcommand("global", "4x4 grid over the whole image");
  grid_global->add_option("--width", gw, "Image width")->required();
  grid_global->add_option("--height", gh, "Image height")->required();
  bind(grid_global, [&] { return cmd_grid_global(g, out, gw, gh); });
  int lh = 0, lw = 0;
  std::optional<int> lx, ly;
  auto* grid_local = grid->add_subcommand("local", "Adaptive grid inside a box region");
  grid_local->set_help_flag("--help", "Print this help message and exit");  // frees -h for --h
  grid_local->add_option("--h", lh, "Region height")->required();
  grid_local->add_option("--w", lw, "Region width")->required();
  grid_local->add_option("--x0", lx, "Region left edge; emits point coordinates");
  grid_local->add_option("--y0", ly, "Region top edge; emits point coordinates");
  bind(grid_local, [&] { return cmd_grid_local(g, out, lh, lw, lx, ly); });

  // filter
  auto* filter = app.add_subcommand("filter", "Shape-descriptor filtering");
  filter->require_subcommand(1);
  std::string gold_path, category;
  auto* derive = filter->add_subcommand("derive-stats", "Reference statistics from gold masks");
  derive->add_option("--gold", gold_path, "Gold masks (JSON/JSONL of RLE or {mask: RLE})")
      ->required()
      ->check(CLI::ExistingFile);
  derive->add_option("--category", category, "Category name recorded in the stats");
  bind(derive, [&] { return cmd_derive_stats(g, out, gold_path, category); });
  std::string items_path;
  std::vector<std::string> stats_paths, overrides;
  double k_sigma = kDefaultSigmaMultiplier;
  int connectivity = 8;
  auto* frun = filter->add_subcommand("run", "Component-count check plus range filter");
  frun->add_option("--items", items_path, "Items JSONL: {id, mask, category, bbox_count|bboxes}")
      ->required()
      ->check(CLI::ExistingFile);
  frun->add_option("--stats", stats_paths, "Reference stats files")->required()->check(CLI::ExistingFile);
  frun->add_option("--k-sigma", k_sigma, "Accepted band half-width in standard deviations")
      ->check(CLI::NonNegativeNumber);
  frun->add_option("--k-sigma-for", overrides, "Per-category override CATEGORY=K");
  frun->add_option("--connectivity", connectivity, "4 or 8")->check(CLI::IsMember({4, 8}));
  bind(frun, [&] {
    return cmd_filter_run(g, out, err, items_path, stats_paths, k_sigma, overrides, connectivity);
  });

  // mask2bbox
  std::string mask_path;
  bool per_component = false;
  int m2b_conn = 8;
  auto* m2b = app.add_subcommand("mask2bbox", "Inclusive bounding box of an RLE mask");
  m2b->add_option("--mask", mask_path, "RLE JSON file")->required()->check(CLI::ExistingFile);
  m2b->add_flag("--components", per_component, "One box per connected component");
  m2b->add_option("--connectivity", m2b_conn, "4 or 8")->check(CLI::IsMember({4, 8}));
  bind(m2b, [&] { return cmd_mask2bbox(g, out, mask_path, per_component, m2b_conn); });

  // loss eval
  auto* loss = app.add_subcommand("loss", "Training-loss evaluation");
  loss->require_subcommand(1);
  std::string loss_input;
  std::optional<std::string> weights_path;
  std::optional<double> lambda_s;
  auto* leval = loss->add_subcommand("eval", "Evaluate loss components on JSON tensors");
  leval->add_option("--input", loss_input, "Sample JSON object or array of samples")
      ->required()
      ->check(CLI::ExistingFile);
  leval->add_option("--weights", weights_path, "LossWeights JSON")->check(CLI::ExistingFile);
  leval->add_option("--lambda-s", lambda_s, "Spatial loss weight")->check(CLI::NonNegativeNumber);
  bind(leval, [&] { return cmd_loss_eval(g, out, loss_input, weights_path, lambda_s); });

  // match
  std::string cand_path, target_path;
  MatchWeights mw;
  auto* match = app.add_subcommand("match", "Assign candidate masks to targets");
  match->add_option("--candidates", cand_path, "Tensor [k,H,W] of probabilities or RLE list")
      ->required()
      ->check(CLI::ExistingFile);
  match->add_option("--targets", target_path, "RLE list")->required()->check(CLI::ExistingFile);
  match->add_option("--w-bce", mw.w_bce, "BCE cost weight")->check(CLI::NonNegativeNumber);
  match->add_option("--w-dice", mw.w_dice, "Dice cost weight")->check(CLI::NonNegativeNumber);
  bind(match, [&] { return cmd_match(g, out, cand_path, target_path, mw); });

  // sweep
  std::string sweep_targets, csv_path;
  std::uint64_t sweep_seed = 0;
  std::vector<std::size_t> ks = kDefaultSweepKs;
  bool timing = false;
  auto* sweep = app.add_subcommand("sweep", "Matching cost-evaluation counts over query counts");
  sweep->add_option("--targets", sweep_targets, "RLE list")->required()->check(CLI::ExistingFile);
  sweep->add_option("--seed", sweep_seed, "Seed for synthetic candidates");
  sweep->add_option("--ks", ks, "Query counts")->check(CLI::PositiveNumber);
  sweep->add_option("--csv", csv_path, "Also write the table as CSV");
  sweep->add_flag("--timing", timing, "Include wall-clock times (output is then not reproducible)");
  bind(sweep, [&] { return cmd_sweep(g, out, sweep_targets, sweep_seed, ks, csv_path, timing); });

  // eval
  std::string data_path, pred_path;
  bool table = false;
  auto* eval = app.add_subcommand("eval", "gIoU/cIoU with per-dimension buckets");
  eval->add_option("--data", data_path, "Dataset JSONL")->required()->check(CLI::ExistingFile);
  eval->add_option("--pred", pred_path, "Predictions JSONL {id, mask|masks}")
      ->required()
      ->check(CLI::ExistingFile);
  eval->add_flag("--table", table, "Plain-text table instead of JSON");
  bind(eval, [&] { return cmd_eval(g, out, err, data_path, pred_path, table); });

  // stats
  std::string stats_data;
  int threshold = kDefaultLinguisticThreshold;
  auto* st = app.add_subcommand("stats", "Dataset statistics");
  st->add_option("--data", stats_data, "Dataset JSONL")->required()->check(CLI::ExistingFile);
  st->add_option("--linguistic-threshold", threshold, "Word count separating short from long")
      ->check(CLI::PositiveNumber);
  bind(st, [&] { return cmd_stats(g, out, err, stats_data, threshold); });

  // validate
  std::string validate_data;
  bool split = false;
  auto* val = app.add_subcommand("validate", "Schema validation of a dataset JSONL");
  val->add_option("--data", validate_data, "Dataset JSONL")->required()->check(CLI::ExistingFile);
  val->add_flag("--split-check", split, "Also report train/test leakage");
  bind(val, [&] { return cmd_validate(g, out, validate_data, split); });

  // qa-gen
  std::string requests_path, review_out;
  GenerationConfig gen;
  bool mock = false, no_trace = false;
  unsigned in_flight = 4;
  auto* qa = app.add_subcommand("qa-gen", "Prompted question-answer generation");
  qa->add_option("--requests", requests_path, "Prompt requests JSONL")
      ->required()
      ->check(CLI::ExistingFile);
  qa->add_option("--endpoint", gen.endpoint, "Generation endpoint URL");
  qa->add_option("--model", gen.model, "Model name sent with each request");
  qa->add_option("--temperature", gen.temperature, "Sampling temperature")
      ->check(CLI::NonNegativeNumber);
  qa->add_option("--api-key-env", gen.api_key_env, "Environment variable holding the API key");
  qa->add_option("--retries", gen.retries, "Retries on transport or 5xx errors (max 1)")
      ->check(CLI::Range(0, 1));
  qa->add_option("--timeout", gen.timeout_seconds, "Request timeout in seconds")
      ->check(CLI::PositiveNumber);
  qa->add_option("--in-flight", in_flight, "Concurrent requests")->check(CLI::PositiveNumber);
  qa->add_flag("--embed-image", gen.embed_image, "Send images as base64");
  qa->add_flag("--no-trace", no_trace, "Omit the step-by-step reasoning instruction");
  qa->add_flag("--mock", mock, "Use deterministic offline responses");
  qa->add_option("--review-out", review_out, "JSONL of items routed to human review");
  bind(qa, [&] {
    gen.reasoning_trace = !no_trace;
    return cmd_qa_gen(g, out, err, requests_path, gen, mock, review_out, in_flight);
  });

  // review serve
  auto* review = app.add_subcommand("review", "Human review service");
  review->require_subcommand(1);
  std::string review_items, review_log;
  ReviewServerOptions server_opts;
  double lease_minutes = 10.0;
  auto* serve = review->add_subcommand("serve", "Serve the review API and UI");
  serve->add_option("--items", review_items, "Review items JSONL to enqueue")
      ->check(CLI::ExistingFile);
  serve->add_option("--log", review_log, "Append-only event log (replayed on start)");
  serve->add_option("--host", server_opts.host, "Bind address");
  serve->add_option("--port", server_opts.port, "Port (0 picks a free one)")->check(CLI::Range(0, 65535));
  serve->add_option("--ui", server_opts.ui_dir, "Review UI bundle directory")->check(CLI::ExistingDirectory);
  serve->add_option("--images", server_opts.images_dir, "Image directory served at /images")
      ->check(CLI::ExistingDirectory);
  serve->add_option("--lease-minutes", lease_minutes, "Lease TTL")->check(CLI::PositiveNumber);
  bind(serve, [&] {
    return cmd_review_serve(err, review_items, review_log, server_opts, lease_minutes);
  });

  // audit
  std::string audit_log;
  double fraction = 0.0;
  std::uint64_t audit_seed = 0;
  auto* audit = app.add_subcommand("audit", "Re-enqueue a seeded sample of accepted items");
  audit->add_option("--log", audit_log, "Review event log")->required();
  audit->add_option("--fraction", fraction, "Fraction of accepted items in (0, 1]")->required();
  audit->add_option("--seed", audit_seed, "Sampling seed");
  bind(audit, [&] { return cmd_audit(g, out, audit_log, fraction, audit_seed); });

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    out << deepest(&app)->help();
    return kExitOk;
  } catch (const CLI::CallForAllHelp& e) {
    out << app.help("", CLI::AppFormatMode::All);
    return kExitOk;
  } catch (const CLI::CallForVersion&) {
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n\n" << deepest(&app)->help();
    return kExitUsage;
  }

  try {
    return action ? action() : kExitUsage;
  } catch (const Error& e) {
    err << "error: " << e.what() << '\n';
    return kExitFindings;
  } catch (const nlohmann::json::exception& e) {
    err << "error: malformed input: " << e.what() << '\n';
    return kExitFindings;
  }
}

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  std::vector<const char*> argv{"segcurate"};
  for (const auto& a : args) argv.push_back(a.c_str());
  return run_cli(static_cast<int>(argv.size()), argv.data(), out, err);
}

}  // namespace segcurate
