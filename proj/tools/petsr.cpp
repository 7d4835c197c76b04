// petsr command line: phantom, simulate, deconv, train, infer, evaluate, study.

#include <chrono>
#include <cstdio>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "petsr/deconv.hpp"
#include "petsr/error.hpp"
#include "petsr/json_io.hpp"
#include "petsr/metrics.hpp"
#include "petsr/nn/checkpoint.hpp"
#include "petsr/pipeline/patches.hpp"
#include "petsr/pipeline/runner.hpp"
#include "petsr/pipeline/study.hpp"

namespace fs = std::filesystem;
using namespace petsr;

namespace {

struct Common {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> out;
  std::optional<std::string> methods;
  std::optional<int> epochs;
};

void add_common(CLI::App* sub, Common& c) {
  sub->add_option("--config", c.config, "JSON configuration file")->required();
  sub->add_option("--seed", c.seed, "master seed (overrides config)");
  sub->add_option("--out", c.out, "output directory (overrides config)");
  sub->add_option("--methods", c.methods, "comma-separated method list (overrides config)");
  sub->add_option("--epochs", c.epochs, "training epochs (overrides config)");
}

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    const auto b = item.find_first_not_of(" \t");
    const auto e = item.find_last_not_of(" \t");
    if (b != std::string::npos) out.push_back(item.substr(b, e - b + 1));
  }
  return out;
}

Json apply_overrides(Json j, const Common& c) {
  if (c.seed) j["seed"] = *c.seed;
  if (c.out) j["output_dir"] = *c.out;
  if (c.methods) j["methods"] = split_list(*c.methods);
  if (c.epochs) j["train"]["epochs"] = *c.epochs;
  return j;
}

/// Removes a command-specific key from a study-style config.
template <class T>
T take(Json& j, const char* key, T fallback) {
  if (!j.contains(key)) return fallback;
  T v;
  try {
    v = j[key].get<T>();
  } catch (const Json::exception& e) {
    fail(ErrorKind::Format, std::string("bad value for '") + key + "': " + e.what());
  }
  j.erase(key);
  return v;
}

template <class T>
T need(const Json& j, const char* key) {
  require(j.contains(key), ErrorKind::Format, std::string("config is missing '") + key + "'");
  try {
    return j[key].get<T>();
  } catch (const Json::exception& e) {
    fail(ErrorKind::Format, std::string("bad value for '") + key + "': " + e.what());
  }
}

void log_line(const std::string& s) {
  static const auto t0 = std::chrono::steady_clock::now();
  const double t = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  std::fprintf(stderr, "[%8.1fs] %s\n", t, s.c_str());
}

void emit_ok(const Json& extra) {
  Json j = extra;
  j["status"] = "ok";
  std::cout << j.dump() << std::endl;
}

// ---------------------------------------------------------------------------

int cmd_phantom(const Common& c) {
  Json j = apply_overrides(read_json_file(c.config), c);
  const int subject = take(j, "subject", 0);
  const auto cfg = pipeline::StudyConfig::from_json(j);
  const auto a = pipeline::make_phantom_subject(cfg, subject);
  const fs::path out = cfg.output_dir;
  fs::create_directories(out);
  const std::string tag = "subject" + std::to_string(subject);
  write_volume(a.labels.to_image(), out / (tag + "_labels"));
  write_volume(a.true_pet, out / (tag + "_pet"));
  write_volume(a.mr, out / (tag + "_mr"));
  write_tissue_table(cfg.tissues, out / "tissues.json");
  emit_ok({{"command", "phantom"}, {"output_dir", out.string()}, {"subject", subject}});
  return 0;
}

int cmd_simulate(const Common& c) {
  Json j = apply_overrides(read_json_file(c.config), c);
  const int subject = take(j, "subject", 0);
  const auto cfg = pipeline::StudyConfig::from_json(j);
  pipeline::SubjectArtifacts a;
  const auto sc = pipeline::make_subject(cfg, subject, &a);
  const fs::path out = cfg.output_dir;
  fs::create_directories(out);
  const std::string tag = "subject" + std::to_string(subject);
  write_volume(a.true_pet, out / (tag + "_true"));
  write_volume(a.mr, out / (tag + "_mr"));
  write_volume(sc.lr, out / (tag + "_input"));
  write_volume(sc.target, out / (tag + "_target"));
  if (a.lr_recon) write_volume(*a.lr_recon, out / (tag + "_lr_recon"));
  if (a.hr_recon) write_volume(*a.hr_recon, out / (tag + "_hr_recon"));
  write_psf_model(cfg.psf_model(), out / "psf.json");
  emit_ok({{"command", "simulate"}, {"output_dir", out.string()}, {"subject", subject}});
  return 0;
}

int cmd_deconv(const Common& c) {
  const Json j = read_json_file(c.config);
  const ImageGrid lr = read_volume(need<std::string>(j, "input"));
  std::optional<ImageGrid> mr;
  if (j.contains("mr")) mr = read_volume(need<std::string>(j, "mr"));
  const PsfModel model = read_psf_model(need<std::string>(j, "psf"));
  DeconvConfig dc;
  dc.penalty = penalty_from_string(j.value("penalty", std::string("TV")));
  dc.beta = need<double>(j, "beta");
  dc.max_iters = j.value("max_iters", dc.max_iters);
  const fs::path out = c.out ? fs::path(*c.out) : fs::path(j.value("output_dir", std::string(".")));
  fs::create_directories(out);
  const DeconvResult r = penalized_deconvolve(lr, model, mr, dc);
  const std::string name = j.value("output_name", std::string(to_string(dc.penalty)));
  write_volume(r.image, out / name, {{"objective", r.objective}, {"status", to_string(r.status)}});
  emit_ok({{"command", "deconv"},
           {"output", (out / name).string()},
           {"iterations", r.iterations},
           {"status", to_string(r.status)},
           {"objective", r.objective.back()}});
  return 0;
}

int cmd_train(const Common& c) {
  const Json j = apply_overrides(read_json_file(c.config), c);
  auto cfg = pipeline::StudyConfig::from_json(j);
  std::vector<std::string> nets;
  for (const auto& m : cfg.methods)
    if (m != "LR" && m != "TV" && m != "JE") nets.push_back(m);
  require(!nets.empty(), ErrorKind::InvalidArgument, "no network variant among the methods");
  cfg.methods = nets;
  const auto res = pipeline::run_study(cfg, {true, true, log_line});
  Json trained = Json::array();
  for (const auto& [m, h] : res.histories)
    trained.push_back({{"method", m},
                       {"checkpoint", (cfg.output_dir / "checkpoints" / (m + ".json")).string()},
                       {"final_train_loss", h.epochs.back().train_loss},
                       {"final_val_loss", h.epochs.back().val_loss}});
  emit_ok({{"command", "train"}, {"output_dir", cfg.output_dir.string()}, {"trained", trained}});
  return 0;
}

int cmd_infer(const Common& c) {
  const Json j = read_json_file(c.config);
  const auto ck = nn::load_checkpoint(need<std::string>(j, "checkpoint"));
  pipeline::SubjectCase sc;
  sc.lr = read_volume(need<std::string>(j, "input"));
  sc.target = sc.lr;
  if (j.contains("mr")) sc.mr = read_volume(need<std::string>(j, "mr"));
  else sc.mr = sc.lr.like();
  require(!ck.net.spec().uses(nn::InputChannel::HrMr) || j.contains("mr"),
          ErrorKind::InvalidArgument,
          std::string(nn::to_string(ck.net.spec().variant)) + " needs an MR volume");
  const auto nc = pipeline::normalize_case(sc);
  const ImageGrid sr = pipeline::infer(ck.net, nc);
  const fs::path out = c.out ? fs::path(*c.out) : fs::path(j.value("output_dir", std::string(".")));
  fs::create_directories(out);
  const std::string name =
      j.value("output_name", std::string(nn::to_string(ck.net.spec().variant)) + "_sr");
  write_volume(sr, out / name);
  emit_ok({{"command", "infer"}, {"output", (out / name).string()}});
  return 0;
}

int cmd_evaluate(const Common& c) {
  const Json j = read_json_file(c.config);
  const Json est = need<Json>(j, "estimates");
  const Json refs = need<Json>(j, "references");
  require(est.is_object() && refs.is_object(), ErrorKind::Format,
          "'estimates' and 'references' map names to volume paths");
  MetricsReport report;
  report.study = j.value("study", std::string("evaluate"));
  for (const auto& [rname, rpath] : refs.items()) {
    const ImageGrid ref = read_volume(rpath.get<std::string>());
    for (const auto& [mname, mpath] : est.items()) {
      const ImageGrid e = read_volume(mpath.get<std::string>());
      report.rows.push_back({mname, rname, psnr(e, ref), ssim(e, ref)});
    }
  }
  report.validate();
  const fs::path out = c.out ? fs::path(*c.out) : fs::path(j.value("output_dir", std::string(".")));
  report.write(out);
  std::cerr << report.to_table();
  emit_ok({{"command", "evaluate"}, {"output_dir", out.string()}, {"rows", report.rows.size()}});
  return 0;
}

int cmd_study(const Common& c) {
  const Json j = apply_overrides(read_json_file(c.config), c);
  const auto cfg = pipeline::StudyConfig::from_json(j);
  const auto res = pipeline::run_study(cfg, {true, true, log_line});
  std::cerr << res.report.to_table();
  emit_ok({{"command", "study"},
           {"output_dir", cfg.output_dir.string()},
           {"config_hash", cfg.hash()}});
  return 0;
}

void emit_error(const std::string& kind, const std::string& message) {
  const Json j = {{"status", "error"}, {"error", {{"kind", kind}, {"message", message}}}};
  std::cerr << j.dump() << std::endl;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"PET super-resolution workbench"};
  app.require_subcommand(1);
  Common common;
  struct Cmd {
    const char* name;
    const char* help;
    int (*run)(const Common&);
  };
  const Cmd cmds[] = {
      {"phantom", "generate a phantom subject", cmd_phantom},
      {"simulate", "simulate LR/HR scans of one subject", cmd_simulate},
      {"deconv", "penalized deconvolution of one volume", cmd_deconv},
      {"train", "train network variants on a synthesized study", cmd_train},
      {"infer", "apply a checkpoint to a volume", cmd_infer},
      {"evaluate", "PSNR/SSIM of volumes against references", cmd_evaluate},
      {"study", "run a full study and write the report", cmd_study},
  };
  std::vector<std::pair<CLI::App*, const Cmd*>> subs;
  for (const auto& c : cmds) {
    CLI::App* sub = app.add_subcommand(c.name, c.help);
    add_common(sub, common);
    subs.emplace_back(sub, &c);
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    emit_error("usage", e.what());
    return 2;
  }

  try {
    for (const auto& [sub, c] : subs)
      if (sub->parsed()) return c->run(common);
  } catch (const Error& e) {
    emit_error(std::string(to_string(e.kind())), e.what());
    return 1;
  } catch (const std::exception& e) {
    emit_error("internal", e.what());
    return 1;
  }
  return 1;
}
