#include "atomflow/io/config.hpp"

#include <fstream>
#include <initializer_list>
#include <sstream>

#include "atomflow/errors.hpp"
#include "atomflow/version.hpp"

namespace atomflow::io {

using nlohmann::json;

namespace {

void check_keys(const json& j, std::initializer_list<const char*> allowed, const std::string& where) {
  if (!j.is_object()) fail(ErrorKind::ConfigError, where + " must be a JSON object");
  for (const auto& [key, value] : j.items()) {
    bool ok = false;
    for (const char* a : allowed) ok = ok || key == a;
    if (!ok) fail(ErrorKind::ConfigError, "unknown key '" + key + "' in " + where);
  }
}

template <typename V>
void read(const json& j, const char* key, V& out, const std::string& where) {
  if (!j.contains(key) || j.at(key).is_null()) return;
  try {
    out = j.at(key).get<V>();
  } catch (const json::exception&) {
    fail(ErrorKind::ConfigError, where + "." + key + " has the wrong type");
  }
}

}  // namespace

json to_json(const ModelSpec& s) {
  json tft = {{"d_model", s.tft.d_model},
              {"num_trunk_layers", s.tft.num_trunk_layers},
              {"num_heads", s.tft.num_heads},
              {"num_aux_layers", s.tft.num_aux_layers},
              {"tap_layer", s.tft.tap_layer},
              {"num_atom_types", s.tft.num_atom_types},
              {"num_properties", s.tft.num_properties},
              {"ffn_multiplier", s.tft.ffn_multiplier},
              {"time_embed_dim", s.tft.time_embed_dim},
              {"class_dropout_prob", s.tft.class_dropout_prob}};
  json tfp = {{"group", std::string(equivariant::to_string(s.tfp.group))},
              {"d_model", s.tfp.d_model},
              {"channel_mode", std::string(equivariant::to_string(s.tfp.channel_mode))},
              {"num_layers", s.tfp.num_layers},
              {"num_heads", s.tfp.num_heads},
              {"num_atom_types", s.tfp.num_atom_types},
              {"ffn_multiplier", s.tfp.ffn_multiplier},
              {"time_embed_dim", s.tfp.time_embed_dim},
              {"class_dropout_prob", s.tfp.class_dropout_prob}};
  return {{"variant", s.variant == Variant::Tft ? "tft" : "tfp"}, {"tft", tft}, {"tfp", tfp}};
}

ModelSpec model_spec_from_json(const json& j) {
  check_keys(j, {"variant", "tft", "tfp"}, "model");
  ModelSpec s;
  std::string variant = "tft";
  read(j, "variant", variant, "model");
  if (variant == "tft") {
    s.variant = Variant::Tft;
  } else if (variant == "tfp") {
    s.variant = Variant::Tfp;
  } else {
    fail(ErrorKind::ConfigError, "model.variant must be 'tft' or 'tfp'");
  }
  if (j.contains("tft")) {
    const auto& t = j.at("tft");
    check_keys(t, {"d_model", "num_trunk_layers", "num_heads", "num_aux_layers", "tap_layer", "num_atom_types",
                   "num_properties", "ffn_multiplier", "time_embed_dim", "class_dropout_prob"},
               "model.tft");
    read(t, "d_model", s.tft.d_model, "model.tft");
    read(t, "num_trunk_layers", s.tft.num_trunk_layers, "model.tft");
    read(t, "num_heads", s.tft.num_heads, "model.tft");
    read(t, "num_aux_layers", s.tft.num_aux_layers, "model.tft");
    s.tft.tap_layer = s.tft.num_trunk_layers;
    read(t, "tap_layer", s.tft.tap_layer, "model.tft");
    read(t, "num_atom_types", s.tft.num_atom_types, "model.tft");
    read(t, "num_properties", s.tft.num_properties, "model.tft");
    read(t, "ffn_multiplier", s.tft.ffn_multiplier, "model.tft");
    read(t, "time_embed_dim", s.tft.time_embed_dim, "model.tft");
    read(t, "class_dropout_prob", s.tft.class_dropout_prob, "model.tft");
  }
  if (j.contains("tfp")) {
    const auto& t = j.at("tfp");
    check_keys(t, {"group", "d_model", "channel_mode", "num_layers", "num_heads", "num_atom_types", "ffn_multiplier",
                   "time_embed_dim", "class_dropout_prob"},
               "model.tfp");
    std::string group = "tetrahedral", mode = "balanced";
    read(t, "group", group, "model.tfp");
    read(t, "channel_mode", mode, "model.tfp");
    s.tfp.group = equivariant::parse_group(group);
    s.tfp.channel_mode = equivariant::parse_channel_mode(mode);
    read(t, "d_model", s.tfp.d_model, "model.tfp");
    read(t, "num_layers", s.tfp.num_layers, "model.tfp");
    read(t, "num_heads", s.tfp.num_heads, "model.tfp");
    read(t, "num_atom_types", s.tfp.num_atom_types, "model.tfp");
    read(t, "ffn_multiplier", s.tfp.ffn_multiplier, "model.tfp");
    read(t, "time_embed_dim", s.tfp.time_embed_dim, "model.tfp");
    read(t, "class_dropout_prob", s.tfp.class_dropout_prob, "model.tfp");
  }
  if (s.variant == Variant::Tft) {
    s.tft.validate();
  } else {
    s.tfp.validate();
  }
  return s;
}

json to_json(const RunConfig& c) {
  json sampling = {{"steps", c.sampling.num_steps},
                   {"gamma", c.sampling.gamma},
                   {"gamma_cart", c.sampling.gamma_cart ? json(*c.sampling.gamma_cart) : json(nullptr)},
                   {"g_eps", c.sampling.g_eps},
                   {"score_enabled", c.sampling.score_enabled},
                   {"score_cutoff", c.sampling.score_cutoff}};
  return {{"model", to_json(c.model)},
          {"loss", {{"lambda_discrete", c.train.loss.lambda_discrete}, {"alpha_t", c.train.loss.alpha_t}}},
          {"train",
           {{"copies", c.train.copies},
            {"steps", c.schedule.steps},
            {"lr", c.train.adam.lr},
            {"beta1", c.train.adam.beta1},
            {"beta2", c.train.adam.beta2},
            {"eps", c.train.adam.eps},
            {"weight_decay", c.train.adam.weight_decay},
            {"ema_decay", c.train.ema_decay},
            {"grad_clip", c.train.grad_clip},
            {"seed", c.train.seed},
            {"val_every", c.schedule.val_every},
            {"val_copies", c.schedule.val_copies},
            {"log_every", c.schedule.log_every},
            {"val_samples", c.schedule.val_samples}}},
          {"sampling", sampling},
          {"data", {{"train", c.train_data.generic_string()}, {"val", c.val_data.generic_string()}}}};
}

RunConfig run_config_from_json(const json& j, const std::filesystem::path& base_dir) {
  check_keys(j, {"model", "loss", "train", "sampling", "data"}, "config");
  RunConfig c;
  if (j.contains("model")) c.model = model_spec_from_json(j.at("model"));
  if (j.contains("loss")) {
    const auto& l = j.at("loss");
    check_keys(l, {"lambda_discrete", "alpha_t"}, "loss");
    read(l, "lambda_discrete", c.train.loss.lambda_discrete, "loss");
    read(l, "alpha_t", c.train.loss.alpha_t, "loss");
  }
  if (j.contains("train")) {
    const auto& t = j.at("train");
    check_keys(t, {"copies", "steps", "lr", "beta1", "beta2", "eps", "weight_decay", "ema_decay", "grad_clip", "seed",
                   "val_every", "val_copies", "log_every", "val_samples"},
               "train");
    read(t, "copies", c.train.copies, "train");
    read(t, "steps", c.schedule.steps, "train");
    read(t, "lr", c.train.adam.lr, "train");
    read(t, "beta1", c.train.adam.beta1, "train");
    read(t, "beta2", c.train.adam.beta2, "train");
    read(t, "eps", c.train.adam.eps, "train");
    read(t, "weight_decay", c.train.adam.weight_decay, "train");
    read(t, "ema_decay", c.train.ema_decay, "train");
    read(t, "grad_clip", c.train.grad_clip, "train");
    read(t, "seed", c.train.seed, "train");
    read(t, "val_every", c.schedule.val_every, "train");
    read(t, "val_copies", c.schedule.val_copies, "train");
    read(t, "log_every", c.schedule.log_every, "train");
    read(t, "val_samples", c.schedule.val_samples, "train");
  }
  if (j.contains("sampling")) {
    const auto& s = j.at("sampling");
    check_keys(s, {"steps", "gamma", "gamma_cart", "g_eps", "score_enabled", "score_cutoff"}, "sampling");
    read(s, "steps", c.sampling.num_steps, "sampling");
    read(s, "gamma", c.sampling.gamma, "sampling");
    if (s.contains("gamma_cart") && !s.at("gamma_cart").is_null()) {
      double g = 0.0;
      read(s, "gamma_cart", g, "sampling");
      c.sampling.gamma_cart = g;
    }
    read(s, "g_eps", c.sampling.g_eps, "sampling");
    read(s, "score_enabled", c.sampling.score_enabled, "sampling");
    read(s, "score_cutoff", c.sampling.score_cutoff, "sampling");
  }
  if (j.contains("data")) {
    const auto& d = j.at("data");
    check_keys(d, {"train", "val"}, "data");
    std::string train, val;
    read(d, "train", train, "data");
    read(d, "val", val, "data");
    auto resolve = [&](const std::string& p) -> std::filesystem::path {
      if (p.empty()) return {};
      const std::filesystem::path path(p);
      return path.is_absolute() || base_dir.empty() ? path : base_dir / path;
    };
    c.train_data = resolve(train);
    c.val_data = resolve(val);
  }
  c.train.validate();
  c.sampling.validate();
  if (c.schedule.steps < 0 || c.schedule.val_every < 1 || c.schedule.val_copies < 1 || c.schedule.log_every < 1 ||
      c.schedule.val_samples < 0)
    fail(ErrorKind::ConfigError, "train.steps, val_samples >= 0 and val_every, val_copies, log_every >= 1 required");
  return c;
}

RunConfig read_run_config(const std::filesystem::path& path) {
  return run_config_from_json(read_json(path), path.parent_path());
}

json to_json(const PropertyStats& stats) { return {{"mean", stats.mean}, {"stddev", stats.stddev}}; }

PropertyStats property_stats_from_json(const json& j) {
  PropertyStats s;
  try {
    s.mean = j.at("mean").get<std::vector<double>>();
    s.stddev = j.at("stddev").get<std::vector<double>>();
  } catch (const json::exception& e) {
    fail(ErrorKind::ConfigError, std::string("property statistics: ") + e.what());
  }
  if (s.mean.size() != kNumProperties || s.stddev.size() != kNumProperties)
    fail(ErrorKind::ConfigError, "property statistics must hold 19 entries");
  return s;
}

json to_json(const AtomCountHistogram& histogram) {
  json out = json::object();
  for (DomainClass d : {DomainClass::Molecule, DomainClass::Material}) {
    json counts = json::object();
    for (const auto& [n, c] : histogram.counts(d)) counts[std::to_string(n)] = c;
    out[std::string(to_string(d))] = counts;
  }
  return out;
}

AtomCountHistogram histogram_from_json(const json& j) {
  AtomCountHistogram h;
  check_keys(j, {"molecule", "material"}, "histogram");
  try {
    for (const auto& [domain, counts] : j.items()) {
      const DomainClass d = parse_domain(domain);
      for (const auto& [n, c] : counts.items()) h.add(d, std::stoi(n), c.get<std::int64_t>());
    }
  } catch (const json::exception& e) {
    fail(ErrorKind::ConfigError, std::string("histogram: ") + e.what());
  } catch (const std::logic_error&) {
    fail(ErrorKind::ConfigError, "histogram: atom counts must be integers");
  }
  return h;
}

std::unique_ptr<Denoiser<float>> make_denoiser(const ModelSpec& spec) {
  if (spec.variant == Variant::Tft) return std::make_unique<FlowTransformer<float>>(spec.tft);
  return std::make_unique<equivariant::Platoformer<float>>(spec.tfp);
}

std::unique_ptr<Denoiser<double>> make_denoiser_f64(const ModelSpec& spec) {
  if (spec.variant == Variant::Tft) return std::make_unique<FlowTransformer<double>>(spec.tft);
  return std::make_unique<equivariant::Platoformer<double>>(spec.tfp);
}

std::string fnv1a_hex(const std::string& text) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : text) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  std::ostringstream os;
  os << std::hex;
  os.width(16);
  os.fill('0');
  os << h;
  return os.str();
}

json make_stamp(const json& config, std::uint64_t seed) {
  return {{"config_hash", fnv1a_hex(config.dump())}, {"seed", seed}, {"code_version", kVersion}};
}

json to_json(const EvalReport& r) {
  json samples = json::array();
  for (const auto& s : r.samples) {
    json o = {{"id", s.id},
              {"domain", std::string(to_string(s.domain))},
              {"num_atoms", s.num_atoms},
              {"unique", s.unique},
              {"angles_clamped", s.angles_clamped},
              {"lengths_floored", s.lengths_floored}};
    o["valid"] = s.valid ? json(*s.valid) : json(nullptr);
    if (s.sanity) {
      o["connected"] = s.sanity->connected;
      o["bond_lengths"] = s.sanity->bond_lengths;
      o["no_clash"] = s.sanity->no_clash;
    } else {
      o["connected"] = o["bond_lengths"] = o["no_clash"] = nullptr;
    }
    o["in_reference"] = s.in_reference ? json(*s.in_reference) : json(nullptr);
    o["type_accuracy"] = s.type_accuracy ? json(*s.type_accuracy) : json(nullptr);
    if (!s.error.empty()) o["error"] = s.error;
    samples.push_back(o);
  }
  json counts = {{"samples", r.num_samples},         {"molecules", r.num_molecules}, {"materials", r.num_materials},
                 {"valid_materials", r.valid_materials}, {"connected", r.connected},     {"bond_lengths_ok", r.bond_lengths_ok},
                 {"clash_free", r.clash_free},       {"unique", r.unique},           {"clamped", r.clamped},
                 {"errors", r.errors},               {"in_reference", r.in_reference}};
  json rates = {{"structural_validity", r.structural_validity},
                {"connectivity", r.connectivity},
                {"bond_geometry", r.bond_geometry},
                {"clash_free", r.clash_free_rate},
                {"uniqueness", r.uniqueness}};
  rates["mean_type_accuracy"] = r.mean_type_accuracy ? json(*r.mean_type_accuracy) : json(nullptr);
  rates["reference_match"] = r.reference_match_rate ? json(*r.reference_match_rate) : json(nullptr);
  return {{"counts", counts}, {"rates", rates}, {"samples", samples}};
}

EvalReport eval_report_from_json(const json& j) {
  EvalReport r;
  try {
    for (const auto& o : j.at("samples")) {
      SampleRecord s;
      s.id = o.at("id").get<std::string>();
      s.domain = parse_domain(o.at("domain").get<std::string>());
      s.num_atoms = o.at("num_atoms").get<int>();
      s.unique = o.at("unique").get<bool>();
      s.angles_clamped = o.value("angles_clamped", false);
      s.lengths_floored = o.value("lengths_floored", false);
      if (!o.at("valid").is_null()) s.valid = o.at("valid").get<bool>();
      if (!o.at("connected").is_null())
        s.sanity = MoleculeChecks{o.at("connected").get<bool>(), o.at("bond_lengths").get<bool>(),
                                  o.at("no_clash").get<bool>()};
      if (!o.at("in_reference").is_null()) s.in_reference = o.at("in_reference").get<bool>();
      if (!o.at("type_accuracy").is_null()) s.type_accuracy = o.at("type_accuracy").get<double>();
      s.error = o.value("error", std::string());
      r.samples.push_back(std::move(s));
    }
  } catch (const json::exception& e) {
    fail(ErrorKind::ParseError, std::string("eval report: ") + e.what());
  }
  return recount(r);
}

json read_json(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorKind::IoError, "cannot open " + path.string());
  try {
    return json::parse(in);
  } catch (const json::parse_error& e) {
    fail(ErrorKind::ParseError, path.string() + ": " + e.what());
  }
}

void write_json(const std::filesystem::path& path, const json& j) {
  std::ofstream out(path, std::ios::binary);
  if (!out) fail(ErrorKind::IoError, "cannot write " + path.string());
  out << j.dump(2) << '\n';
}

}  // namespace atomflow::io
