#include "petsr/pipeline/runner.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "petsr/deconv.hpp"
#include "petsr/error.hpp"
#include "petsr/nn/checkpoint.hpp"
#include "petsr/pipeline/patches.hpp"

namespace petsr::pipeline {

namespace fs = std::filesystem;

MetricsRow mean_metrics(const std::string& method, const std::string& reference,
                        const std::vector<ImageGrid>& est, const std::vector<ImageGrid>& ref) {
  require(est.size() == ref.size() && !est.empty(), ErrorKind::ShapeMismatch,
          "need one reference per estimate");
  MetricsRow row{method, reference, 0.0, 0.0};
  for (std::size_t i = 0; i < est.size(); ++i) {
    row.psnr += psnr(est[i], ref[i]);
    row.ssim += ssim(est[i], ref[i]);
  }
  row.psnr /= static_cast<double>(est.size());
  row.ssim /= static_cast<double>(est.size());
  return row;
}

namespace {

constexpr std::uint64_t kNetInit = 11;
constexpr std::uint64_t kShuffle = 12;

std::string fmt(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.9g", v);
  return buf;
}

std::vector<ImageGrid> reference_images(const std::vector<SubjectCase>& val,
                                        const std::string& ref) {
  std::vector<ImageGrid> out;
  for (const auto& c : val) {
    if (ref == "true") {
      require(c.true_pet.has_value(), ErrorKind::InvalidArgument, "no true PET for reference");
      out.push_back(*c.true_pet);
    } else {
      out.push_back(c.target);
    }
  }
  return out;
}

ImageGrid deconvolve(const NormalizedCase& c, const PsfModel& model, Penalty penalty, double beta,
                     int iters) {
  DeconvConfig dc;
  dc.penalty = penalty;
  dc.beta = beta;
  dc.max_iters = iters;
  std::optional<ImageGrid> mr;
  if (penalty == Penalty::JE) mr = c.data.mr;
  const DeconvResult r = penalized_deconvolve(c.data.lr, model, mr, dc);
  ImageGrid out = denormalize_pet(r.image, c.norm);
  out.description = std::string(to_string(penalty)) + " deconvolution";
  return out;
}

}  // namespace

StudyResult run_study(const StudyConfig& cfg, const RunOptions& opt, const StudyDataset* dataset) {
  cfg.validate();
  auto log = [&](const std::string& s) {
    if (opt.log) opt.log(s);
  };
  const fs::path out = cfg.output_dir;
  fs::create_directories(out / "volumes");
  fs::create_directories(out / "checkpoints");
  fs::create_directories(out / "png");

  StudyDataset owned;
  if (!dataset) {
    log("synthesizing " + std::to_string(cfg.n_subjects) + " subjects");
    owned = make_study_dataset(cfg);
    dataset = &owned;
  }
  const auto& train_cases = dataset->train;
  const auto& val_cases = dataset->val;
  require(!train_cases.empty() && !val_cases.empty(), ErrorKind::InvalidArgument,
          "dataset needs training and validation subjects");

  std::vector<NormalizedCase> train_n, val_n;
  for (const auto& c : train_cases) {
    train_n.push_back(normalize_case(c));
    // Training only ever sees LR, target and MR.
    train_n.back().data.true_pet.reset();
  }
  for (const auto& c : val_cases) val_n.push_back(normalize_case(c));

  const PsfModel model = cfg.psf_model();
  const auto refs = cfg.references();
  StudyResult res;
  res.report.study = "study" + std::to_string(cfg.study);
  res.report.seed = cfg.seed;
  res.report.config_hash = cfg.hash();

  for (std::size_t mi = 0; mi < cfg.methods.size(); ++mi) {
    const std::string& method = cfg.methods[mi];
    log("method " + method);
    try {
      std::vector<ImageGrid> sr;
      if (method == "LR") {
        for (const auto& c : val_cases) sr.push_back(c.lr);
      } else if (method == "TV" || method == "JE") {
        const Penalty pen = penalty_from_string(method);
        const auto& betas = pen == Penalty::TV ? cfg.deconv.tv_betas : cfg.deconv.je_betas;
        // Weight picked on the first validation subject against the first reference.
        const ImageGrid ref0 = reference_images({val_cases[0]}, refs[0])[0];
        double best_beta = betas[0], best = -std::numeric_limits<double>::infinity();
        std::optional<ImageGrid> best_img;
        for (double b : betas) {
          ImageGrid img = deconvolve(val_n[0], model, pen, b, cfg.deconv.max_iters);
          const double p = psnr(img, ref0);
          log("  beta " + fmt(b) + " psnr " + format_metric(p));
          if (p > best) {
            best = p;
            best_beta = b;
            best_img = std::move(img);
          }
        }
        res.betas[method] = best_beta;
        res.report.notes.emplace_back("beta_" + method, fmt(best_beta));
        sr.push_back(std::move(*best_img));
        for (std::size_t i = 1; i < val_n.size(); ++i)
          sr.push_back(deconvolve(val_n[i], model, pen, best_beta, cfg.deconv.max_iters));
      } else {
        const auto variant = nn::variant_from_string(method);
        const auto spec = nn::NetworkSpec::for_variant(variant, cfg.train.filters);
        const std::uint64_t vid = static_cast<std::uint64_t>(variant);
        const std::uint64_t init_seed = derive_seed(cfg.seed, vid, kNetInit);
        auto net = nn::build_network<float>(spec, init_seed);

        std::vector<nn::PatchSet> parts;
        for (const auto& c : train_n)
          parts.push_back(extract_patches(c.data, spec, cfg.patch_size, cfg.patch_stride));
        const nn::PatchSet train_set = nn::PatchSet::concat(parts);
        parts.clear();
        for (const auto& c : val_n)
          parts.push_back(extract_patches(c.data, spec, cfg.patch_size, cfg.patch_stride));
        const nn::PatchSet val_set = nn::PatchSet::concat(parts);

        nn::TrainConfig tc;
        tc.epochs = cfg.train.epochs;
        tc.batch_size = cfg.train.batch_size;
        tc.learning_rate = cfg.train.learning_rate;
        tc.shuffle = cfg.train.shuffle;
        tc.seed = derive_seed(cfg.seed, vid, kShuffle);
        log("  " + std::to_string(train_set.size()) + " training patches, " +
            std::to_string(net.parameter_count()) + " parameters");
        auto hist = nn::train(net, train_set, tc, &val_set, [&](const nn::EpochRecord& r) {
          if (r.epoch % 10 == 0 || r.epoch == tc.epochs)
            log("  epoch " + std::to_string(r.epoch) + " train " + fmt(r.train_loss) + " val " +
                fmt(r.val_loss));
        });
        nn::save_checkpoint(out / "checkpoints" / method, net, init_seed, tc.epochs);
        hist.write_csv(out / "checkpoints" / (method + "_history.csv"));
        res.report.notes.emplace_back("val_loss_epoch0_" + method,
                                      fmt(hist.epochs.front().val_loss));
        res.report.notes.emplace_back("val_loss_final_" + method,
                                      fmt(hist.epochs.back().val_loss));
        res.histories[method] = std::move(hist);
        for (const auto& c : val_n) sr.push_back(infer(net, c));
      }

      for (const auto& ref : refs)
        res.report.rows.push_back(mean_metrics(method, ref, sr, reference_images(val_cases, ref)));
      res.outputs[method] = std::move(sr);
    } catch (const Error& e) {
      log("  failed: " + std::string(e.what()));
      res.failures.push_back(method);
      res.report.notes.emplace_back("failed_" + method, e.what());
    }
  }

  if (opt.write_volumes) {
    for (std::size_t i = 0; i < val_cases.size(); ++i) {
      const auto& c = val_cases[i];
      const std::string tag = "subject" + std::to_string(c.id);
      write_volume(c.lr, out / "volumes" / (tag + "_input"));
      write_volume(c.target, out / "volumes" / (tag + "_target"));
      write_volume(c.mr, out / "volumes" / (tag + "_mr"));
      if (c.true_pet) write_volume(*c.true_pet, out / "volumes" / (tag + "_true"));
      for (const auto& [m, imgs] : res.outputs)
        write_volume(imgs[i], out / "volumes" / (tag + "_" + m));
    }
  }
  if (opt.write_png) {
    for (std::size_t i = 0; i < val_cases.size(); ++i) {
      const auto& c = val_cases[i];
      const int z = c.lr.dims.nz / 2;
      const double hi = *std::max_element(c.target.data.begin(), c.target.data.end());
      const std::pair<double, double> win{0.0, hi > 0.0 ? hi : 1.0};
      // LR | HR | methods in request order
      std::vector<Gray8> tiles{window_slice(c.lr, SliceAxis::Z, z, win),
                               window_slice(c.target, SliceAxis::Z, z, win)};
      for (const auto& m : cfg.methods)
        if (res.outputs.count(m)) tiles.push_back(window_slice(res.outputs[m][i], SliceAxis::Z, z, win));
      write_png(hstack(tiles), out / "png" / ("subject" + std::to_string(c.id) + ".png"));
    }
  }

  if (!res.failures.empty()) res.report.notes.emplace_back("status", "partial");
  res.report.validate();
  res.report.write(out);
  if (!res.failures.empty())
    fail(ErrorKind::Convergence, "methods failed: " + [&] {
      std::string s;
      for (const auto& f : res.failures) s += (s.empty() ? "" : ", ") + f;
      return s;
    }());
  return res;
}

}  // namespace petsr::pipeline
