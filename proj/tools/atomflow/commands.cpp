#include "commands.hpp"

#include <cmath>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <limits>
#include <map>
#include <memory>
#include <nlohmann/json.hpp>
#include <vector>

#include "atomflow/errors.hpp"
#include "atomflow/finetune.hpp"
#include "atomflow/io/checkpoint.hpp"
#include "atomflow/io/config.hpp"
#include "atomflow/io/dataset.hpp"
#include "atomflow/metrics.hpp"
#include "atomflow/model.hpp"
#include "atomflow/rng.hpp"
#include "atomflow/sampler.hpp"
#include "atomflow/train.hpp"

namespace atomflow::cli {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr std::uint64_t kInitStream = 0x1417;
constexpr std::uint64_t kValidationStream = 0x7A11;

struct LoadedModel {
  io::CheckpointMeta meta;
  io::ModelSpec spec;
  std::unique_ptr<Denoiser<float>> model;
  nn::ParameterStore<float> params;
};

LoadedModel load_model(const fs::path& dir) {
  LoadedModel m;
  const io::CheckpointMeta meta = io::read_checkpoint_meta(dir);
  if (!meta.config.contains("model")) fail(ErrorKind::ConfigMismatch, "checkpoint config has no model section");
  m.spec = io::model_spec_from_json(meta.config.at("model"));
  m.model = io::make_denoiser(m.spec);
  auto loaded = io::load_checkpoint(dir, m.model->parameter_layout());
  m.meta = std::move(loaded.meta);
  m.params = std::move(loaded.params);
  return m;
}

std::vector<DomainClass> domains_in(std::span<const AtomicSystem> systems) {
  std::vector<DomainClass> out;
  for (DomainClass d : {DomainClass::Molecule, DomainClass::Material})
    for (const auto& s : systems)
      if (s.domain == d) {
        out.push_back(d);
        break;
      }
  return out;
}

json rates_json(const EvalReport& r) { return io::to_json(r).at("rates"); }

void print_rates(const std::string& label, const EvalReport& r) {
  std::cout << label << ": samples " << r.num_samples << " errors " << r.errors;
  if (r.num_materials > 0) std::cout << " validity " << r.structural_validity;
  if (r.num_molecules > 0) std::cout << " connectivity " << r.connectivity << " bonds " << r.bond_geometry;
  std::cout << " uniqueness " << r.uniqueness;
  if (r.mean_type_accuracy) std::cout << " type_accuracy " << *r.mean_type_accuracy;
  std::cout << "\n";
}

}  // namespace

int run_train(const TrainArgs& args) {
  io::RunConfig cfg = io::read_run_config(args.config);
  if (args.steps) cfg.schedule.steps = *args.steps;
  if (args.seed) cfg.train.seed = *args.seed;
  if (cfg.schedule.steps < 0) fail(ErrorKind::ConfigError, "--steps must be >= 0");
  if (cfg.train_data.empty()) fail(ErrorKind::ConfigError, "config has no data.train path");

  const auto train = io::read_dataset(cfg.train_data);
  if (train.empty()) fail(ErrorKind::EmptyBatch, "training dataset is empty");
  const auto val = cfg.val_data.empty() ? train : io::read_dataset(cfg.val_data);
  if (val.empty()) fail(ErrorKind::EmptyBatch, "validation dataset is empty");

  auto model = io::make_denoiser(cfg.model);
  for (const auto* set : {&train, &val})
    for (const auto& s : *set)
      if (!model->supports(s.domain))
        fail(ErrorKind::UnsupportedDomain, "system '" + s.id + "' is a " + std::string(to_string(s.domain)) +
                                               ", which this model variant does not support");

  nn::ParameterStore<float> params(model->parameter_layout());
  auto init_rng = RngStream::derive(cfg.train.seed, {kInitStream});
  model->init_parameters(params, init_rng);
  Trainer<float> trainer(*model, std::move(params), cfg.train);

  const json config_json = io::to_json(cfg);
  const json stamp = io::make_stamp(config_json, cfg.train.seed);
  const AtomCountHistogram histogram(train);
  const auto domains = domains_in(train);

  fs::create_directories(args.out);
  std::ofstream log(args.out / "train_log.jsonl", std::ios::binary);
  if (!log) fail(ErrorKind::IoError, "cannot write " + (args.out / "train_log.jsonl").string());
  log << json{{"stamp", stamp}}.dump() << '\n';

  std::cout << "parameters " << model->parameter_layout().total_count() << "\n";

  auto make_meta = [&](std::int64_t step, double val_loss) {
    io::CheckpointMeta meta;
    meta.config = config_json;
    meta.ema = true;
    meta.step = step;
    meta.stamp = stamp;
    meta.extra = {{"histogram", io::to_json(histogram)}, {"validation_loss", val_loss}};
    return meta;
  };

  double best = std::numeric_limits<double>::infinity();
  double last_val = std::numeric_limits<double>::quiet_NaN();
  auto validate = [&](std::int64_t step) {
    const double vl = trainer.validation_loss(val, cfg.train.seed ^ kValidationStream, cfg.schedule.val_copies);
    last_val = vl;
    json entry = {{"step", step}, {"validation_loss", vl}};
    std::cout << "step " << step << " validation_loss " << vl << "\n";
    if (cfg.schedule.val_samples > 0) {
      const ModelPredictor<float> predictor(*model, trainer.ema_params());
      for (DomainClass d : domains) {
        SampleRequest req;
        req.domain = d;
        req.batch_size = cfg.schedule.val_samples;
        req.schedule = cfg.sampling;
        req.schedule.seed = cfg.train.seed ^ kValidationStream;
        const auto res = generate(predictor, req, &histogram);
        const EvalReport report = evaluate(res.systems, train);
        entry[std::string("sampling_") + std::string(to_string(d))] = rates_json(report);
        print_rates("  sampled " + std::string(to_string(d)), report);
      }
    }
    log << entry.dump() << '\n';
    if (vl < best) {
      best = vl;
      io::save_checkpoint(args.out / "best", trainer.ema_params(), make_meta(step, vl));
    }
  };

  for (int step = 1; step <= cfg.schedule.steps; ++step) {
    const StepReport r = trainer.step(train);
    if (!std::isfinite(r.loss)) fail(ErrorKind::NonFiniteActivation, "training loss became non-finite");
    if (step % cfg.schedule.log_every == 0 || step == 1) {
      std::cout << "step " << step << " loss " << r.loss << " grad_norm " << r.grad_norm << "\n";
      log << json{{"step", step},
                  {"loss", r.loss},
                  {"grad_norm", r.grad_norm},
                  {"discrete", r.mean.discrete},
                  {"cart", r.mean.cart},
                  {"frac", r.mean.frac},
                  {"lengths", r.mean.lengths},
                  {"angles", r.mean.angles}}
                 .dump()
          << '\n';
    }
    if (step % cfg.schedule.val_every == 0 || step == cfg.schedule.steps) validate(step);
  }
  if (cfg.schedule.steps == 0) validate(0);
  io::save_checkpoint(args.out / "last", trainer.ema_params(), make_meta(trainer.steps_taken(), last_val));
  std::cout << "wrote " << (args.out / "best").string() << " and " << (args.out / "last").string() << "\n";
  return 0;
}

int run_sample(const SampleArgs& args) {
  const LoadedModel m = load_model(args.ckpt);
  io::RunConfig run = io::run_config_from_json(m.meta.config);

  SampleRequest req;
  req.domain = parse_domain(args.domain);
  if (!m.model->supports(req.domain))
    fail(ErrorKind::UnsupportedDomain, "checkpoint model cannot generate " + args.domain + "s");
  req.batch_size = args.n;
  req.num_atoms = args.num_atoms;
  req.schedule = run.sampling;
  if (args.steps) req.schedule.num_steps = *args.steps;
  req.schedule.seed = args.seed;

  AtomCountHistogram histogram;
  if (m.meta.extra.contains("histogram")) histogram = io::histogram_from_json(m.meta.extra.at("histogram"));

  const ModelPredictor<float> predictor(*m.model, m.params);
  const GenerateResult res = generate(predictor, req, &histogram);
  for (const auto& f : res.failures) std::cerr << "sample failed: " << f << "\n";

  json invocation = {{"checkpoint_stamp", m.meta.stamp},
                     {"domain", args.domain},
                     {"n", args.n},
                     {"steps", req.schedule.num_steps},
                     {"num_atoms", args.num_atoms ? json(*args.num_atoms) : json(nullptr)}};
  const json stamp = io::make_stamp(invocation, args.seed);
  io::write_dataset(args.out, res.systems, stamp);
  std::cout << "wrote " << res.systems.size() << " systems to " << args.out.string() << " (" << res.failures.size()
            << " failed)\n";

  if (!args.report.empty()) {
    std::vector<AtomicSystem> reference;
    if (!args.reference.empty()) reference = io::read_dataset(args.reference);
    EvalReport report = evaluate(res.systems, reference);
    for (const auto& f : res.failures) {
      SampleRecord rec;
      rec.id = f.substr(0, f.find(':'));
      rec.domain = req.domain;
      rec.error = f;
      if (req.domain == DomainClass::Material) {
        rec.valid = false;
      } else {
        rec.sanity = MoleculeChecks{};
      }
      report.samples.push_back(std::move(rec));
    }
    report = recount(report);
    json out = io::to_json(report);
    out["stamp"] = stamp;
    io::write_json(args.report, out);
    print_rates("report", report);
  }
  return 0;
}

int run_finetune(const FinetuneArgs& args) {
  const io::CheckpointMeta meta = io::read_checkpoint_meta(args.ckpt);
  if (!meta.config.contains("model")) fail(ErrorKind::ConfigMismatch, "checkpoint config has no model section");
  const io::ModelSpec spec = io::model_spec_from_json(meta.config.at("model"));
  if (spec.variant != io::Variant::Tft)
    fail(ErrorKind::UnsupportedDomain, "finetuning needs a checkpoint of the trunk transformer variant");
  const FlowTransformer<float> model(spec.tft);
  auto loaded = io::load_checkpoint(args.ckpt, model.parameter_layout());

  const auto train = io::read_dataset(args.data);
  if (train.empty()) fail(ErrorKind::EmptyBatch, "finetune dataset is empty");
  const auto val = args.val.empty() ? train : io::read_dataset(args.val);

  FinetuneConfig cfg = FinetuneConfig::defaults(parse_finetune_task(args.task), args.tap_layer.value_or(spec.tft.tap_layer));
  cfg.stats = PropertyStats::compute(train);
  cfg.validate();

  FinetuneLoopOptions opts;
  opts.steps = args.steps;
  opts.batch_size = args.batch;
  opts.eval_every = args.eval_every;
  opts.adam.lr = args.lr;
  opts.seed = args.seed;

  const auto result = finetune_loop(model, std::move(loaded.params), train, val, cfg, opts);
  for (const auto& e : result.log)
    std::cout << "step " << e.step << " train_loss " << e.train_loss << " val_metric " << e.val_metric << "\n";

  json invocation = {{"checkpoint_stamp", meta.stamp}, {"task", args.task}, {"tap_layer", cfg.tap_layer},
                     {"steps", args.steps},           {"batch", args.batch}, {"lr", args.lr}};
  io::CheckpointMeta out = meta;
  out.stamp = io::make_stamp(invocation, args.seed);
  out.ema = false;
  out.extra["finetune"] = {{"task", args.task},
                           {"tap_layer", cfg.tap_layer},
                           {"t_floor", cfg.t_floor},
                           {"lambda_forces", cfg.lambda_forces},
                           {"stats", io::to_json(cfg.stats)},
                           {"best_metric", result.best_metric},
                           {"best_step", result.best_step}};
  out.step = meta.step + result.best_step;
  io::save_checkpoint(args.out / "best", result.best, out);
  out.step = meta.step + args.steps;
  io::save_checkpoint(args.out / "last", result.last, out);

  const FinetuneMetrics metrics = evaluate_finetune(model, result.best, val, cfg);
  if (cfg.task == FinetuneTask::Properties) {
    std::cout << "best step " << result.best_step << " standardized property MAE " << metrics.property_mae << "\n";
  } else {
    std::cout << "best step " << result.best_step << " energy MAE " << metrics.energy_mae << " force MAE "
              << metrics.force_mae << "\n";
  }
  return 0;
}

int run_eval(const EvalArgs& args) {
  const auto samples = io::read_dataset(args.in);
  std::vector<AtomicSystem> reference;
  if (!args.reference.empty()) reference = io::read_dataset(args.reference);
  const EvalReport report = evaluate(samples, reference);
  json out = io::to_json(report);
  out["stamp"] = io::make_stamp(
      {{"input", args.in.generic_string()}, {"reference", args.reference.generic_string()}}, 0);
  io::write_json(args.report, out);
  print_rates("report", report);
  return 0;
}

int run_inspect(const InspectArgs& args) {
  json config;
  std::unique_ptr<Denoiser<float>> model;
  if (!args.config.empty()) {
    const io::RunConfig cfg = io::read_run_config(args.config);
    config = io::to_json(cfg);
    model = io::make_denoiser(cfg.model);
  } else {
    const LoadedModel m = load_model(args.ckpt);
    config = m.meta.config;
    std::cout << "checkpoint step " << m.meta.step << " ema " << (m.meta.ema ? "true" : "false") << "\n";
    std::cout << "stamp " << m.meta.stamp.dump() << "\n";
    model = io::make_denoiser(m.spec);
  }
  std::cout << "config " << config.dump(2) << "\n";

  const auto& layout = model->parameter_layout();
  std::map<std::string, std::int64_t> groups;
  for (const auto& spec : layout.specs()) {
    const auto first = spec.name.find('.');
    const auto second = spec.name.find('.', first + 1);
    groups[spec.name.substr(0, second)] += spec.count();
  }
  for (const auto& [name, count] : groups) std::cout << "group " << std::left << std::setw(24) << name << count << "\n";
  std::cout << "tensors " << layout.size() << "\n";
  std::cout << "total_parameters " << layout.total_count() << "\n";

  if (args.tensors) {
    if (!args.ckpt.empty()) {
      for (const auto& t : io::checkpoint_tensor_table(args.ckpt)) std::cout << "tensor " << t.dump() << "\n";
    } else {
      for (const auto& spec : layout.specs())
        std::cout << "tensor " << spec.name << " " << spec.rows << "x" << spec.cols << " " << spec.count() << "\n";
    }
  }
  return 0;
}

}  // namespace atomflow::cli
