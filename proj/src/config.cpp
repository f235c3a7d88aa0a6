#include "detlab/config.hpp"

#include <cstdio>
#include <fstream>
#include <set>
#include <sstream>

#include "json.hpp"

#include "detlab/errors.hpp"

namespace detlab {

using nlohmann::json;

namespace {

[[noreturn]] void fail(const std::string& path, const std::string& what) {
  throw ValidationError("config: " + path + ": " + what);
}

void check_keys(const json& obj, const std::string& path,
                const std::set<std::string>& allowed) {
  for (const auto& [key, value] : obj.items()) {
    (void)value;
    if (!allowed.count(key)) fail(path.empty() ? key : path + "." + key, "unknown key");
  }
}

double get_num(const json& obj, const std::string& path, const char* key,
               double fallback) {
  if (!obj.contains(key)) return fallback;
  const json& v = obj.at(key);
  if (!v.is_number()) fail(path + "." + key, "expected a number");
  return v.get<double>();
}

int get_int(const json& obj, const std::string& path, const char* key,
            int fallback) {
  if (!obj.contains(key)) return fallback;
  const json& v = obj.at(key);
  if (!v.is_number_integer()) fail(path + "." + key, "expected an integer");
  return v.get<int>();
}

std::uint64_t get_u64(const json& obj, const std::string& path, const char* key,
                      std::uint64_t fallback) {
  if (!obj.contains(key)) return fallback;
  const json& v = obj.at(key);
  if (!v.is_number_unsigned() && !v.is_number_integer())
    fail(path + "." + key, "expected a non-negative integer");
  const auto i = v.get<std::int64_t>();
  if (i < 0) fail(path + "." + key, "expected a non-negative integer");
  return static_cast<std::uint64_t>(i);
}

bool get_bool(const json& obj, const std::string& path, const char* key,
              bool fallback) {
  if (!obj.contains(key)) return fallback;
  const json& v = obj.at(key);
  if (!v.is_boolean()) fail(path + "." + key, "expected a boolean");
  return v.get<bool>();
}

std::string get_str(const json& obj, const std::string& path, const char* key,
                    const std::string& fallback) {
  if (!obj.contains(key)) return fallback;
  const json& v = obj.at(key);
  if (!v.is_string()) fail(path + "." + key, "expected a string");
  return v.get<std::string>();
}

LossVariant variant_from_string(const std::string& s, const std::string& path) {
  if (s == "fl") return LossVariant::kFocal;
  if (s == "vfl") return LossVariant::kVarifocal;
  if (s == "qfl") return LossVariant::kQualityFocal;
  fail(path, "unknown loss variant '" + s + "' (expected fl, vfl or qfl)");
}

RankMode rank_from_string(const std::string& s, const std::string& path) {
  if (s == "cls") return RankMode::kCls;
  if (s == "cls_ctr") return RankMode::kClsTimesCtr;
  if (s == "iacs") return RankMode::kIacs;
  fail(path, "unknown rank mode '" + s + "' (expected cls, cls_ctr or iacs)");
}

}  // namespace

std::string to_string(LossVariant v) {
  switch (v) {
    case LossVariant::kFocal: return "fl";
    case LossVariant::kQualityFocal: return "qfl";
    case LossVariant::kVarifocal: default: return "vfl";
  }
}

std::string to_string(RankMode m) {
  switch (m) {
    case RankMode::kCls: return "cls";
    case RankMode::kClsTimesCtr: return "cls_ctr";
    case RankMode::kIacs: default: return "iacs";
  }
}

std::string to_string(OracleMode m) {
  switch (m) {
    case OracleMode::kGtCtr: return "gt_ctr";
    case OracleMode::kGtCtrIou: return "gt_ctr_iou";
    case OracleMode::kGtBbox: return "gt_bbox";
    case OracleMode::kGtCls: return "gt_cls";
    case OracleMode::kGtClsIou: return "gt_cls_iou";
    case OracleMode::kNone: default: return "none";
  }
}

ExperimentConfig parse_config(const std::string& text) {
  json root = json::object();
  {
    std::string trimmed = text;
    const auto first = trimmed.find_first_not_of(" \t\r\n");
    if (first != std::string::npos) {
      json parsed;
      try {
        parsed = json::parse(text);
      } catch (const json::parse_error& e) {
        throw ValidationError(std::string("config: ") + e.what());
      }
      if (!parsed.is_object()) throw ValidationError("config: root must be an object");
      root = std::move(parsed);
    }
  }

  check_keys(root, "", {"seed", "train", "scene", "grid", "loss", "head",
                        "infer", "oracle", "loss_compare"});

  ExperimentConfig cfg;
  TrainConfig& tc = cfg.train;
  tc.seed = get_u64(root, "", "seed", tc.seed);

  if (root.contains("train")) {
    const json& t = root.at("train");
    if (!t.is_object()) fail("train", "expected an object");
    check_keys(t, "train",
               {"epochs", "lr", "batch_size", "train_scenes", "eval_scenes",
                "atss_k", "q_from_refined", "shuffle", "freeze_scales"});
    tc.epochs = get_int(t, "train", "epochs", tc.epochs);
    tc.lr = get_num(t, "train", "lr", tc.lr);
    tc.batch_size = get_int(t, "train", "batch_size", tc.batch_size);
    tc.train_scenes = get_int(t, "train", "train_scenes", tc.train_scenes);
    tc.eval_scenes = get_int(t, "train", "eval_scenes", tc.eval_scenes);
    tc.atss_k = get_int(t, "train", "atss_k", tc.atss_k);
    tc.q_from_refined = get_bool(t, "train", "q_from_refined", tc.q_from_refined);
    tc.shuffle = get_bool(t, "train", "shuffle", tc.shuffle);
    tc.forward_opts.freeze_scales =
        get_bool(t, "train", "freeze_scales", tc.forward_opts.freeze_scales);
  }

  if (root.contains("scene")) {
    const json& s = root.at("scene");
    if (!s.is_object()) fail("scene", "expected an object");
    check_keys(s, "scene",
               {"width", "height", "min_objects", "max_objects", "num_classes",
                "min_size", "max_size", "signal_min", "signal_max", "noise"});
    SceneSpec& sp = tc.scene;
    sp.width = get_num(s, "scene", "width", sp.width);
    sp.height = get_num(s, "scene", "height", sp.height);
    sp.min_objects = get_int(s, "scene", "min_objects", sp.min_objects);
    sp.max_objects = get_int(s, "scene", "max_objects", sp.max_objects);
    sp.num_classes = get_int(s, "scene", "num_classes", sp.num_classes);
    sp.min_size = get_num(s, "scene", "min_size", sp.min_size);
    sp.max_size = get_num(s, "scene", "max_size", sp.max_size);
    sp.signal_min = get_num(s, "scene", "signal_min", sp.signal_min);
    sp.signal_max = get_num(s, "scene", "signal_max", sp.signal_max);
    sp.noise = get_num(s, "scene", "noise", sp.noise);
    tc.head.num_classes = sp.num_classes;
  }

  if (root.contains("grid")) {
    const json& g = root.at("grid");
    if (!g.is_object()) fail("grid", "expected an object");
    check_keys(g, "grid", {"levels"});
    if (g.contains("levels")) {
      const json& levels = g.at("levels");
      if (!levels.is_array() || levels.empty())
        fail("grid.levels", "expected a non-empty array");
      tc.grid.levels.clear();
      for (std::size_t i = 0; i < levels.size(); ++i) {
        const json& lv = levels[i];
        const std::string path = "grid.levels[" + std::to_string(i) + "]";
        if (!lv.is_object()) fail(path, "expected an object");
        check_keys(lv, path, {"stride", "height", "width"});
        LevelSpec spec;
        spec.stride = get_int(lv, path, "stride", spec.stride);
        spec.height = get_int(lv, path, "height", spec.height);
        spec.width = get_int(lv, path, "width", spec.width);
        if (spec.height <= 0 || spec.width <= 0 || spec.stride <= 0)
          fail(path, "stride, height and width must be positive");
        tc.grid.levels.push_back(spec);
      }
    }
  }

  if (root.contains("loss")) {
    const json& l = root.at("loss");
    if (!l.is_object()) fail("loss", "expected an object");
    check_keys(l, "loss", {"variant", "alpha", "gamma", "beta_qfl", "lambda0",
                           "lambda1", "q_weighting"});
    LossConfig& lc = tc.loss;
    lc.variant = variant_from_string(
        get_str(l, "loss", "variant", to_string(lc.variant)), "loss.variant");
    lc.alpha = get_num(l, "loss", "alpha", lc.alpha);
    lc.gamma = get_num(l, "loss", "gamma", lc.gamma);
    lc.beta_qfl = get_num(l, "loss", "beta_qfl", lc.beta_qfl);
    lc.lambda0 = get_num(l, "loss", "lambda0", lc.lambda0);
    lc.lambda1 = get_num(l, "loss", "lambda1", lc.lambda1);
    lc.q_weighting = get_bool(l, "loss", "q_weighting", lc.q_weighting);
  }

  if (root.contains("head")) {
    const json& h = root.at("head");
    if (!h.is_object()) fail("head", "expected an object");
    check_keys(h, "head", {"feature_dim", "init_dist"});
    tc.head.feature_dim = get_int(h, "head", "feature_dim", tc.head.feature_dim);
    tc.head.init_dist = get_num(h, "head", "init_dist", tc.head.init_dist);
  }

  if (root.contains("infer")) {
    const json& f = root.at("infer");
    if (!f.is_object()) fail("infer", "expected an object");
    check_keys(f, "infer", {"score_floor", "topk_per_level", "nms_thr", "rank_mode"});
    InferenceFilterConfig& ic = tc.infer;
    ic.score_floor = get_num(f, "infer", "score_floor", ic.score_floor);
    ic.topk_per_level = get_int(f, "infer", "topk_per_level", ic.topk_per_level);
    ic.nms_thr = get_num(f, "infer", "nms_thr", ic.nms_thr);
    ic.mode = rank_from_string(get_str(f, "infer", "rank_mode", to_string(ic.mode)),
                               "infer.rank_mode");
  }

  if (root.contains("oracle")) {
    const json& o = root.at("oracle");
    if (!o.is_object()) fail("oracle", "expected an object");
    check_keys(o, "oracle", {"scenes"});
    cfg.oracle_scenes = get_int(o, "oracle", "scenes", cfg.oracle_scenes);
    if (cfg.oracle_scenes <= 0) fail("oracle.scenes", "must be positive");
  }

  if (root.contains("loss_compare")) {
    const json& c = root.at("loss_compare");
    if (!c.is_object()) fail("loss_compare", "expected an object");
    check_keys(c, "loss_compare",
               {"variants", "seeds", "q_weight_ablation", "refine_ablation",
                "fl_alpha", "sweep"});
    if (c.contains("variants")) {
      const json& v = c.at("variants");
      if (!v.is_array() || v.empty())
        fail("loss_compare.variants", "expected a non-empty array");
      cfg.compare_variants.clear();
      for (std::size_t i = 0; i < v.size(); ++i) {
        if (!v[i].is_string())
          fail("loss_compare.variants[" + std::to_string(i) + "]", "expected a string");
        cfg.compare_variants.push_back(variant_from_string(
            v[i].get<std::string>(),
            "loss_compare.variants[" + std::to_string(i) + "]"));
      }
    }
    if (c.contains("seeds")) {
      const json& v = c.at("seeds");
      if (!v.is_array() || v.empty())
        fail("loss_compare.seeds", "expected a non-empty array");
      cfg.compare_seeds.clear();
      for (std::size_t i = 0; i < v.size(); ++i) {
        if (!v[i].is_number_integer() && !v[i].is_number_unsigned())
          fail("loss_compare.seeds[" + std::to_string(i) + "]", "expected an integer");
        const auto s = v[i].get<std::int64_t>();
        if (s < 0)
          fail("loss_compare.seeds[" + std::to_string(i) + "]", "must be >= 0");
        cfg.compare_seeds.push_back(static_cast<std::uint64_t>(s));
      }
    }
    cfg.compare_q_ablation =
        get_bool(c, "loss_compare", "q_weight_ablation", cfg.compare_q_ablation);
    cfg.compare_refine_ablation =
        get_bool(c, "loss_compare", "refine_ablation", cfg.compare_refine_ablation);
    cfg.compare_fl_alpha = get_num(c, "loss_compare", "fl_alpha", cfg.compare_fl_alpha);
    if (c.contains("sweep")) {
      const json& v = c.at("sweep");
      if (!v.is_array()) fail("loss_compare.sweep", "expected an array");
      cfg.sweep.clear();
      for (std::size_t i = 0; i < v.size(); ++i) {
        const std::string path = "loss_compare.sweep[" + std::to_string(i) + "]";
        if (!v[i].is_object()) fail(path, "expected an object");
        check_keys(v[i], path, {"alpha", "gamma"});
        cfg.sweep.emplace_back(get_num(v[i], path, "alpha", tc.loss.alpha),
                               get_num(v[i], path, "gamma", tc.loss.gamma));
      }
    }
  }

  return cfg;
}

ExperimentConfig load_config(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ValidationError("config: cannot open " + path);
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_config(buf.str());
}

std::string resolved_config_json(const ExperimentConfig& cfg) {
  const TrainConfig& tc = cfg.train;
  json root;
  root["seed"] = tc.seed;
  root["train"] = {{"epochs", tc.epochs},
                   {"lr", tc.lr},
                   {"batch_size", tc.batch_size},
                   {"train_scenes", tc.train_scenes},
                   {"eval_scenes", tc.eval_scenes},
                   {"atss_k", tc.atss_k},
                   {"q_from_refined", tc.q_from_refined},
                   {"shuffle", tc.shuffle},
                   {"freeze_scales", tc.forward_opts.freeze_scales}};
  root["scene"] = {{"width", tc.scene.width},
                   {"height", tc.scene.height},
                   {"min_objects", tc.scene.min_objects},
                   {"max_objects", tc.scene.max_objects},
                   {"num_classes", tc.scene.num_classes},
                   {"min_size", tc.scene.min_size},
                   {"max_size", tc.scene.max_size},
                   {"signal_min", tc.scene.signal_min},
                   {"signal_max", tc.scene.signal_max},
                   {"noise", tc.scene.noise}};
  json levels = json::array();
  for (const auto& lv : tc.grid.levels) {
    levels.push_back({{"stride", lv.stride}, {"height", lv.height}, {"width", lv.width}});
  }
  root["grid"] = {{"levels", levels}};
  root["loss"] = {{"variant", to_string(tc.loss.variant)},
                  {"alpha", tc.loss.alpha},
                  {"gamma", tc.loss.gamma},
                  {"beta_qfl", tc.loss.beta_qfl},
                  {"lambda0", tc.loss.lambda0},
                  {"lambda1", tc.loss.lambda1},
                  {"q_weighting", tc.loss.q_weighting}};
  root["head"] = {{"feature_dim", tc.head.feature_dim},
                  {"init_dist", tc.head.init_dist}};
  root["infer"] = {{"score_floor", tc.infer.score_floor},
                   {"topk_per_level", tc.infer.topk_per_level},
                   {"nms_thr", tc.infer.nms_thr},
                   {"rank_mode", to_string(tc.infer.mode)}};
  root["oracle"] = {{"scenes", cfg.oracle_scenes}};
  json variants = json::array();
  for (const auto v : cfg.compare_variants) variants.push_back(to_string(v));
  json sweep = json::array();
  for (const auto& [a, g] : cfg.sweep) sweep.push_back({{"alpha", a}, {"gamma", g}});
  root["loss_compare"] = {{"variants", variants},
                          {"seeds", cfg.compare_seeds},
                          {"q_weight_ablation", cfg.compare_q_ablation},
                          {"refine_ablation", cfg.compare_refine_ablation},
                          {"fl_alpha", cfg.compare_fl_alpha},
                          {"sweep", sweep}};
  return root.dump();
}

std::string config_hash(const ExperimentConfig& cfg) {
  const std::string text = resolved_config_json(cfg);
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (const unsigned char c : text) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
  return std::string(buf);
}

}  // namespace detlab
