#include <cstdio>
#include <iostream>
#include <map>
#include <string>

#include "CLI11.hpp"

#include "detlab/config.hpp"
#include "detlab/errors.hpp"
#include "detlab/experiments.hpp"
#include "detlab/gradcheck.hpp"
#include "detlab/ranking.hpp"
#include "detlab/report.hpp"

namespace {

using namespace detlab;

struct CommonArgs {
  std::string config_path;
  std::string out_path;
  std::string format = "csv";
  std::uint64_t seed = 0;
  bool seed_set = false;
};

void add_common(CLI::App* cmd, CommonArgs& args) {
  cmd->add_option("--config", args.config_path, "JSON config file (empty file = defaults)");
  cmd->add_option("--out", args.out_path, "report output path (stdout when omitted)");
  cmd->add_option("--format", args.format, "report format: csv, md or json")
      ->check(CLI::IsMember({"csv", "md", "markdown", "json"}));
  cmd->add_option("--seed", args.seed, "override the run seed")
      ->each([&args](const std::string&) { args.seed_set = true; });
}

ExperimentConfig config_from(const CommonArgs& args) {
  ExperimentConfig cfg = args.config_path.empty() ? ExperimentConfig{}
                                                  : load_config(args.config_path);
  if (args.seed_set) cfg.train.seed = args.seed;
  return cfg;
}

void deliver(const ReportTable& table, const CommonArgs& args) {
  const ReportFormat format = report_format_from_string(args.format);
  if (args.out_path.empty()) {
    std::cout << render_report(table, format);
  } else {
    write_report(table, format, args.out_path);
    std::cout << "wrote " << args.out_path << " (config " << table.config_hash
              << ")\n";
  }
}

int run_nms_command(const std::string& dump_path, const std::string& out_path,
                    bool xywh, bool soft, const std::string& method,
                    double iou_thr, double sigma, double floor) {
  const Dump dump = read_dump(dump_path, xywh);

  // (image, class) -> scored boxes, expanded from score vectors
  std::map<std::pair<int, int>, std::vector<ScoredBox>> groups;
  for (const auto& det : dump.detections) {
    if (det.score_vector.has_value()) {
      for (std::size_t c = 0; c < det.score_vector->size(); ++c) {
        const double s = (*det.score_vector)[c];
        if (s <= 0.0) continue;
        auto& g = groups[{det.image_id, static_cast<int>(c)}];
        g.push_back({det.box, s, static_cast<int>(g.size())});
      }
    } else {
      auto& g = groups[{det.image_id, det.class_id}];
      g.push_back({det.box, det.score, static_cast<int>(g.size())});
    }
  }

  Dump out;
  out.images = dump.images;
  out.annotations = dump.annotations;
  for (auto& [key, boxes] : groups) {
    std::vector<ScoredBox> kept;
    if (soft) {
      const SoftNmsMethod m =
          method == "gaussian" ? SoftNmsMethod::kGaussian : SoftNmsMethod::kLinear;
      kept = soft_nms(std::move(boxes), m, iou_thr, sigma, floor);
    } else {
      kept = nms(std::move(boxes), iou_thr);
    }
    for (const auto& k : kept) {
      DumpDetection det;
      det.image_id = key.first;
      det.class_id = key.second;
      det.box = k.box;
      det.score = k.score;
      out.detections.push_back(det);
    }
  }
  write_dump(out, out_path);
  std::cout << "wrote " << out_path << " (" << out.detections.size()
            << " detections kept)\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"desk-scale lab for IoU-aware dense detection scoring"};
  app.require_subcommand(1);

  CommonArgs train_args;
  std::string train_dump_out;
  CLI::App* cmd_train = app.add_subcommand("train", "train a micro head and report per-epoch metrics");
  add_common(cmd_train, train_args);
  cmd_train->add_option("--dump-out", train_dump_out,
                        "write held-out candidates and annotations as a JSON dump");

  CommonArgs eval_args;
  std::string eval_dump;
  bool eval_xywh = false;
  CLI::App* cmd_eval = app.add_subcommand("eval", "score an ingested detection dump");
  add_common(cmd_eval, eval_args);
  cmd_eval->add_option("--dump", eval_dump, "candidate dump to evaluate")->required();
  cmd_eval->add_flag("--xywh", eval_xywh, "dump boxes are [x, y, w, h]");

  CommonArgs oracle_args;
  std::string oracle_dump;
  bool oracle_xywh = false;
  CLI::App* cmd_oracle = app.add_subcommand(
      "oracle", "ground-truth replacement ranking study (train or ingest)");
  add_common(cmd_oracle, oracle_args);
  cmd_oracle->add_option("--dump", oracle_dump,
                         "run the study on this dump instead of training");
  cmd_oracle->add_flag("--xywh", oracle_xywh, "dump boxes are [x, y, w, h]");

  CommonArgs compare_args;
  CLI::App* cmd_compare = app.add_subcommand(
      "loss-compare", "train per (loss variant, seed) and compare mean AP");
  add_common(cmd_compare, compare_args);

  std::string nms_dump, nms_out, nms_method = "linear";
  bool nms_xywh = false, nms_soft = false;
  double nms_iou = 0.6, nms_sigma = 0.5, nms_floor = 1e-3;
  CLI::App* cmd_nms = app.add_subcommand("nms", "suppress duplicates in a detection dump");
  cmd_nms->add_option("--dump", nms_dump, "input dump")->required();
  cmd_nms->add_option("--out", nms_out, "output dump")->required();
  cmd_nms->add_flag("--xywh", nms_xywh, "dump boxes are [x, y, w, h]");
  cmd_nms->add_flag("--soft", nms_soft, "rescore instead of suppressing");
  cmd_nms->add_option("--method", nms_method, "soft-NMS decay: linear or gaussian")
      ->check(CLI::IsMember({"linear", "gaussian"}));
  cmd_nms->add_option("--iou-thr", nms_iou, "IoU threshold (default 0.6)");
  cmd_nms->add_option("--sigma", nms_sigma, "gaussian soft-NMS sigma (default 0.5)");
  cmd_nms->add_option("--floor", nms_floor, "soft-NMS score floor (default 1e-3)");

  int gc_samples = 1000;
  std::uint64_t gc_seed = 0x5eed5eedULL;
  CLI::App* cmd_gc = app.add_subcommand(
      "grad-check", "finite-difference audit of every analytic gradient");
  cmd_gc->add_option("--samples", gc_samples, "random samples per kernel (default 1000)");
  cmd_gc->add_option("--seed", gc_seed, "sampling seed");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  try {
    if (cmd_train->parsed()) {
      const ExperimentConfig cfg = config_from(train_args);
      TrainResult result;
      const ReportTable table = run_train_experiment(cfg, &result);
      deliver(table, train_args);
      if (!train_dump_out.empty()) {
        write_dump(make_eval_dump(cfg, result), train_dump_out);
        std::cout << "wrote " << train_dump_out << "\n";
      }
    } else if (cmd_eval->parsed()) {
      const ExperimentConfig cfg = config_from(eval_args);
      const Dump dump = read_dump(eval_dump, eval_xywh);
      deliver(run_eval_dump(cfg, dump), eval_args);
    } else if (cmd_oracle->parsed()) {
      const ExperimentConfig cfg = config_from(oracle_args);
      if (oracle_dump.empty()) {
        deliver(run_oracle_study(cfg), oracle_args);
      } else {
        const Dump dump = read_dump(oracle_dump, oracle_xywh);
        deliver(run_oracle_study_on_dump(cfg, dump), oracle_args);
      }
    } else if (cmd_compare->parsed()) {
      const ExperimentConfig cfg = config_from(compare_args);
      deliver(run_loss_compare(cfg), compare_args);
    } else if (cmd_nms->parsed()) {
      return run_nms_command(nms_dump, nms_out, nms_xywh, nms_soft, nms_method,
                             nms_iou, nms_sigma, nms_floor);
    } else if (cmd_gc->parsed()) {
      const GradCheckReport report = run_grad_check(gc_samples, gc_seed);
      std::printf("kernel samples: %d\n", report.kernel_samples);
      std::printf("fl   max rel err: %.3e\n", report.fl_max);
      std::printf("vfl  max rel err: %.3e\n", report.vfl_max);
      std::printf("qfl  max rel err: %.3e\n", report.qfl_max);
      std::printf("giou max rel err: %.3e\n", report.giou_max);
      std::printf("head max rel err: %.3e (%d params)\n", report.head_max,
                  report.head_params);
      if (!report.pass()) {
        std::fprintf(stderr, "gradient check failed\n");
        return 3;
      }
    }
  } catch (const ValidationError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  } catch (const DivergenceError& e) {
    std::fprintf(stderr, "diverged: %s\n", e.what());
    return 3;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 0;
}
