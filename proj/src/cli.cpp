#include "bair/cli.hpp"

#include <cmath>
#include <cstdio>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "bair/common.hpp"
#include "bair/harness.hpp"
#include "bair/image_io.hpp"
#include "bair/training.hpp"

namespace bair {
namespace {

struct EngineFlags {
  std::string model_path;
  std::string kernel_name;
};

struct ReportFlags {
  std::string corpus_dir;
  std::string out_path;
  std::string quantize = "on";
  std::string space = "rgb";
  std::uint32_t seed = 0;
};

void add_engine_flags(CLI::App* sub, EngineFlags* ef) {
  auto* m = sub->add_option("--model", ef->model_path, "Trained model file");
  auto* k = sub->add_option("--kernel", ef->kernel_name,
                            "Classic kernel: nearest, bilinear, bicubic, "
                            "area, or bilnn");
  m->excludes(k);
}

void add_report_flags(CLI::App* sub, ReportFlags* rf) {
  sub->add_option("--corpus", rf->corpus_dir, "Image directory")->required();
  sub->add_option("--out", rf->out_path, "Report CSV path")->required();
  sub->add_option("--quantize", rf->quantize, "8-bit quantize between stages")
      ->check(CLI::IsMember({"on", "off"}));
  sub->add_option("--space", rf->space, "Metric space: y or rgb")
      ->check(CLI::IsMember({"y", "rgb"}));
  sub->add_option("--seed", rf->seed, "Seed echoed in report metadata");
}

Engine make_engine(const EngineFlags& ef) {
  if (!ef.model_path.empty()) return make_model_engine(ef.model_path);
  if (!ef.kernel_name.empty()) return make_kernel_engine(ef.kernel_name);
  throw UsageError("need an engine: pass --model or --kernel");
}

MetricSpace make_space(const std::string& name) {
  MetricSpace s;
  s.mode = name == "y" ? MetricMode::kLuminance : MetricMode::kRgb;
  return s;
}

void emit_report(const ReportFlags& rf, const Engine& engine,
                 const std::vector<ReportRow>& rows) {
  ReportMeta meta;
  meta.engine = engine.label;
  meta.seed = rf.seed;
  meta.quantize = rf.quantize == "on";
  write_report_csv(rf.out_path, meta, rows);
}

void cmd_rescale(const std::string& input, const std::string& out,
                 const EngineFlags& ef, int out_h, int out_w) {
  Engine engine = make_engine(ef);
  Image img = read_png(input);
  write_png(out, run_rescale(img, engine, out_h, out_w));
}

void cmd_train(const std::string& config_path) {
  TrainSettings s = load_train_settings(config_path);
  if (s.corpus_dir.empty()) throw ContractError("config sets no corpus");
  if (s.out_model.empty()) throw ContractError("config sets no out_model");
  std::vector<Image> corpus = load_corpus(s.corpus_dir);
  RescaleModel model = s.init_model.empty()
                           ? init_model(ModelConfig{}, s.config.seed)
                           : load_model(s.init_model);
  std::vector<CurvePoint> curve =
      train(model, s.config, s.loss, corpus, s.stage);
  save_model(model, s.out_model);
  if (!s.curve_csv.empty()) write_curve_csv(s.curve_csv, curve);
  if (!curve.empty()) {
    std::printf("trained %zu steps, final loss %.6g\n", curve.size(),
                curve.back().loss);
  }
}

void cmd_metrics(const std::string& ref_path, const std::string& test_path,
                 const std::string& space) {
  Image ref = read_png(ref_path);
  Image test = read_png(test_path);
  MetricSpace s = make_space(space);
  double p = psnr(ref, test, s);
  if (std::isinf(p)) std::printf("psnr_db=inf\n");
  else std::printf("psnr_db=%.6f\n", p);
  std::printf("ssim=%.6f\n", ssim(ref, test, s));
}

}  // namespace

int run_cli(int argc, const char* const* argv) {
  CLI::App app{"Bidirectional arbitrary image rescaling toolkit"};
  app.require_subcommand(1);

  // rescale
  auto* rescale = app.add_subcommand("rescale", "Rescale one image");
  EngineFlags rescale_ef;
  std::string rescale_in, rescale_out;
  int rescale_h = 0, rescale_w = 0;
  rescale->add_option("--input", rescale_in, "Input PNG")->required();
  rescale->add_option("--out", rescale_out, "Output PNG")->required();
  rescale->add_option("--out-h", rescale_h, "Output height")->required();
  rescale->add_option("--out-w", rescale_w, "Output width")->required();
  add_engine_flags(rescale, &rescale_ef);
  rescale->callback([&] {
    cmd_rescale(rescale_in, rescale_out, rescale_ef, rescale_h, rescale_w);
  });

  // train
  auto* train_cmd = app.add_subcommand("train", "Train a model stage");
  std::string train_config;
  train_cmd->add_option("--config", train_config, "Training config file")
      ->required();
  train_cmd->callback([&] { cmd_train(train_config); });

  // idem
  auto* idem = app.add_subcommand("idem", "Cycle idempotence report");
  EngineFlags idem_ef;
  ReportFlags idem_rf;
  double idem_scale = 2.0;
  int idem_cycles = 1;
  std::string idem_mode = "closed";
  idem->add_option("--scale", idem_scale, "Symmetric scale")->required();
  idem->add_option("--cycles", idem_cycles, "Cycle count K");
  idem->add_option("--mode", idem_mode, "closed or open downscaler")
      ->check(CLI::IsMember({"closed", "open"}));
  add_engine_flags(idem, &idem_ef);
  add_report_flags(idem, &idem_rf);
  idem->callback([&] {
    Engine engine = make_engine(idem_ef);
    emit_report(idem_rf, engine,
                run_idem(load_corpus(idem_rf.corpus_dir), engine, idem_scale,
                         idem_cycles, idem_mode, idem_rf.quantize == "on",
                         make_space(idem_rf.space)));
  });

  // sweep
  auto* sweep = app.add_subcommand("sweep", "Continuous scale sweep");
  EngineFlags sweep_ef;
  ReportFlags sweep_rf;
  std::string sweep_scales;
  sweep->add_option("--scales", sweep_scales,
                    "lo:hi:step range or comma list")
      ->required();
  add_engine_flags(sweep, &sweep_ef);
  add_report_flags(sweep, &sweep_rf);
  sweep->callback([&] {
    Engine engine = make_engine(sweep_ef);
    emit_report(sweep_rf, engine,
                run_sweep(load_corpus(sweep_rf.corpus_dir), engine,
                          parse_scale_range(sweep_scales),
                          sweep_rf.quantize == "on",
                          make_space(sweep_rf.space)));
  });

  // asym
  auto* asym = app.add_subcommand("asym", "Asymmetric scale report");
  EngineFlags asym_ef;
  ReportFlags asym_rf;
  double asym_sv = 1.0, asym_sh = 1.0;
  std::string asym_conv = "native";
  asym->add_option("--scale-v", asym_sv, "Vertical scale")->required();
  asym->add_option("--scale-h", asym_sh, "Horizontal scale")->required();
  asym->add_option("--conversion", asym_conv, "pre-interp or native")
      ->check(CLI::IsMember({"pre-interp", "native"}));
  add_engine_flags(asym, &asym_ef);
  add_report_flags(asym, &asym_rf);
  asym->callback([&] {
    Engine engine = make_engine(asym_ef);
    AsymResult res = run_asym(load_corpus(asym_rf.corpus_dir), engine,
                              asym_sv, asym_sh, asym_conv,
                              asym_rf.quantize == "on",
                              make_space(asym_rf.space));
    std::printf("s_m=%.9f\n", res.s_m);
    emit_report(asym_rf, engine, res.rows);
  });

  // bigscale
  auto* big = app.add_subcommand("bigscale", "Out-of-range scale report");
  EngineFlags big_ef;
  ReportFlags big_rf;
  double big_scale = 6.0;
  big->add_option("--scale", big_scale, "Scale, must exceed 4")->required();
  add_engine_flags(big, &big_ef);
  add_report_flags(big, &big_rf);
  big->callback([&] {
    Engine engine = make_engine(big_ef);
    BigscaleResult res =
        run_bigscale(load_corpus(big_rf.corpus_dir), engine, big_scale,
                     big_rf.quantize == "on", make_space(big_rf.space));
    for (const BigscaleSizes& z : res.sizes) {
      std::printf("sizes gt=%dx%d pre=%dx%d lr=%dx%d\n", z.gt_h, z.gt_w,
                  z.pre_h, z.pre_w, z.lr_h, z.lr_w);
    }
    emit_report(big_rf, engine, res.rows);
  });

  // metrics
  auto* met = app.add_subcommand("metrics", "PSNR/SSIM between two images");
  std::string met_ref, met_test, met_space = "rgb";
  met->add_option("--ref", met_ref, "Reference PNG")->required();
  met->add_option("--test", met_test, "Test PNG")->required();
  met->add_option("--space", met_space, "Metric space: y or rgb")
      ->check(CLI::IsMember({"y", "rgb"}));
  met->callback([&] { cmd_metrics(met_ref, met_test, met_space); });

  // synth
  auto* synth = app.add_subcommand("synth", "Generate a synthetic corpus");
  std::string synth_out;
  int synth_count = 8, synth_size = 64;
  std::uint32_t synth_seed = 0;
  synth->add_option("--out", synth_out, "Output directory")->required();
  synth->add_option("--count", synth_count, "Image count");
  synth->add_option("--size", synth_size, "Image side length");
  synth->add_option("--seed", synth_seed, "Generator seed");
  synth->callback([&] {
    std::vector<std::string> paths =
        synth_corpus(synth_out, synth_count, synth_size, synth_seed);
    std::printf("wrote %zu images to %s\n", paths.size(), synth_out.c_str());
  });

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? 0 : 1;
  } catch (const UsageError& e) {
    std::fprintf(stderr, "usage error: %s\n", e.what());
    return 1;
  } catch (const IoError& e) {
    std::fprintf(stderr, "io error: %s\n", e.what());
    return 2;
  } catch (const FormatError& e) {
    std::fprintf(stderr, "format error: %s\n", e.what());
    return 3;
  } catch (const ContractError& e) {
    std::fprintf(stderr, "contract error: %s\n", e.what());
    return 3;
  }
  return 0;
}

}  // namespace bair
