// SPDX-License-Identifier: Apache-2.0
//
// ecgcloud command line: serve, train, init-model, synth, predict, roc,
// loadgen.
#include <atomic>
#include <csignal>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <sstream>
#include <thread>

#include <CLI11.hpp>

#include "ecgcloud/bundle.hpp"
#include "ecgcloud/cardionet.hpp"
#include "ecgcloud/engine.hpp"
#include "ecgcloud/http_api.hpp"
#include "ecgcloud/loadgen.hpp"
#include "ecgcloud/metrics.hpp"
#include "ecgcloud/service_config.hpp"
#include "ecgcloud/synthetic.hpp"
#include "ecgcloud/training.hpp"
#include "ecgcloud/wire.hpp"

using namespace ecgcloud;

namespace {

std::atomic<bool> g_stop{false};

void on_signal(int) { g_stop.store(true); }

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("IO_ERROR", "cannot read " + path);
  std::ostringstream out;
  out << in.rdbuf();
  return out.str();
}

void write_file(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("IO_ERROR", "cannot write " + path);
  out << text;
}

ecg::LeadConfiguration parse_leads(const std::string& s) {
  if (s == "single") return ecg::LeadConfiguration::SingleLead;
  if (s == "twelve") return ecg::LeadConfiguration::TwelveLead;
  throw ValidationError("INVALID_PARAM", "leads must be single or twelve");
}

std::vector<model::Label> select_labels(const std::string& codes) {
  const auto vocab = model::default_vocabulary();
  if (codes.empty()) return vocab;
  std::vector<model::Label> out;
  std::stringstream ss(codes);
  std::string code;
  while (std::getline(ss, code, ',')) {
    const auto it = std::find_if(vocab.begin(), vocab.end(), [&](const auto& l) { return l.code == code; });
    if (it == vocab.end()) throw ValidationError("INVALID_PARAM", "unknown label " + code);
    out.push_back(*it);
  }
  return out;
}

struct ServeOptions {
  std::string config;
  std::string host;
  int port = -1;
  std::size_t workers = 0;
  std::string single_lead;
  std::string twelve_lead;
  std::string tokens;
};

int run_serve(const ServeOptions& o) {
  service::ServiceConfig cfg = o.config.empty() ? service::ServiceConfig{} : service::load_service_config(o.config);
  if (!o.host.empty()) cfg.host = o.host;
  if (o.port >= 0) cfg.port = o.port;
  if (o.workers > 0) cfg.workers = o.workers;
  if (!o.single_lead.empty()) cfg.single_lead_model = o.single_lead;
  if (!o.twelve_lead.empty()) cfg.twelve_lead_model = o.twelve_lead;
  if (!o.tokens.empty()) cfg.tokens_file = o.tokens;
  service::apply_env_overrides(cfg);
  if (cfg.tokens_file.empty()) throw ValidationError("INVALID_CONFIG", "a token file is required");

  auto engine_cfg = cfg.engine_config();
  std::mutex log_mutex;
  engine_cfg.log_sink = [&](const std::string& line) {
    std::lock_guard lock(log_mutex);
    std::clog << line << '\n';
  };
  serve::Engine engine(engine_cfg, service::load_models(cfg), serve::TokenRegistry::from_file(cfg.tokens_file));
  engine.start();
  api::ApiService service(engine);
  api::HttpServer server(service, cfg.http_threads);
  const int port = server.bind(cfg.host, cfg.port);
  std::signal(SIGINT, on_signal);
  std::signal(SIGTERM, on_signal);
  server.start_background();
  std::cout << "listening on http://" << cfg.host << ':' << port << std::endl;
  while (!g_stop.load()) std::this_thread::sleep_for(std::chrono::milliseconds(100));
  server.stop();
  engine.shutdown();
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"ECG analysis service"};
  app.require_subcommand(1);

  ServeOptions serve_opts;
  auto* serve_cmd = app.add_subcommand("serve", "Run the HTTP service");
  serve_cmd->add_option("--config", serve_opts.config, "Service config JSON");
  serve_cmd->add_option("--host", serve_opts.host, "Listen address");
  serve_cmd->add_option("--port", serve_opts.port, "Listen port (0 picks one)");
  serve_cmd->add_option("--workers", serve_opts.workers, "Engine workers");
  serve_cmd->add_option("--single-lead-model", serve_opts.single_lead, "Single-lead bundle");
  serve_cmd->add_option("--twelve-lead-model", serve_opts.twelve_lead, "Twelve-lead bundle");
  serve_cmd->add_option("--tokens", serve_opts.tokens, "Token file");

  std::string init_leads = "single", init_out, init_labels;
  bool init_toy = false;
  std::uint64_t init_seed = 1;
  auto* init_cmd = app.add_subcommand("init-model", "Write a freshly initialized bundle");
  init_cmd->add_option("--leads", init_leads, "single or twelve");
  init_cmd->add_flag("--toy", init_toy, "Eight-layer desk configuration");
  init_cmd->add_option("--labels", init_labels, "Comma-separated label codes");
  init_cmd->add_option("--seed", init_seed);
  init_cmd->add_option("--out", init_out)->required();

  std::string train_leads = "single", train_out, train_labels = "NSR,AF";
  bool train_toy = true;
  std::size_t train_n = 400, val_n = 100;
  double train_duration = 10.0;
  train::TrainConfig tc;
  tc.learning_rate = 0.01;
  tc.batch_size = 16;
  tc.max_batches = 1000;
  tc.plateau_patience_batches = 1000;
  tc.validation_every = 100;
  auto* train_cmd = app.add_subcommand("train", "Train on synthetic NSR/AF recordings");
  train_cmd->add_option("--leads", train_leads, "single or twelve");
  train_cmd->add_option("--toy", train_toy, "Use the eight-layer configuration")->default_val(true);
  train_cmd->add_option("--labels", train_labels, "Comma-separated label codes");
  train_cmd->add_option("--train", train_n, "Training recordings");
  train_cmd->add_option("--val", val_n, "Validation recordings");
  train_cmd->add_option("--duration", train_duration, "Seconds per recording");
  train_cmd->add_option("--seed", tc.seed);
  train_cmd->add_option("--lr", tc.learning_rate);
  train_cmd->add_option("--batch-size", tc.batch_size);
  train_cmd->add_option("--batches", tc.max_batches);
  train_cmd->add_option("--patience", tc.plateau_patience_batches);
  train_cmd->add_option("--validate-every", tc.validation_every);
  train_cmd->add_option("--run-dir", tc.run_dir, "Snapshot directory");
  train_cmd->add_option("--out", train_out, "Serving bundle (macro-best snapshot)")->required();

  std::string synth_kind = "sinus", synth_leads = "single", synth_out, synth_format = "csv";
  double synth_bpm = 75.0, synth_duration = 30.0, synth_rate = 250.0, synth_noise = 0.02;
  std::uint64_t synth_seed = 1;
  auto* synth_cmd = app.add_subcommand("synth", "Generate a synthetic recording");
  synth_cmd->add_option("--kind", synth_kind, "sinus or af");
  synth_cmd->add_option("--bpm", synth_bpm);
  synth_cmd->add_option("--duration", synth_duration);
  synth_cmd->add_option("--rate", synth_rate);
  synth_cmd->add_option("--noise", synth_noise, "Noise std in mV");
  synth_cmd->add_option("--leads", synth_leads, "single or twelve");
  synth_cmd->add_option("--seed", synth_seed);
  synth_cmd->add_option("--format", synth_format, "csv or json (wire request)");
  synth_cmd->add_option("--out", synth_out)->required();

  std::string predict_model, predict_csv;
  double predict_rate = 250.0, predict_gain = 1000.0, predict_baseline = 0.0;
  auto* predict_cmd = app.add_subcommand("predict", "Run a bundle on a CSV recording");
  predict_cmd->add_option("--model", predict_model)->required();
  predict_cmd->add_option("--csv", predict_csv)->required();
  predict_cmd->add_option("--rate", predict_rate);
  predict_cmd->add_option("--gain", predict_gain);
  predict_cmd->add_option("--baseline", predict_baseline);

  std::string roc_in, roc_curve_out;
  auto* roc_cmd = app.add_subcommand("roc", "ROC AUC from a score,label CSV");
  roc_cmd->add_option("--in", roc_in)->required();
  roc_cmd->add_option("--curve", roc_curve_out, "Write the curve as CSV");

  loadgen::LoadPlan plan;
  plan.url = "http://127.0.0.1:8080";
  std::size_t lg_requests = 0;
  double lg_duration = 0.0;
  std::string lg_corpus, lg_synthetic, lg_out, lg_hist, lg_records;
  std::uint64_t lg_seed = 1;
  std::size_t lg_pool = 16;
  auto* lg_cmd = app.add_subcommand("loadgen", "Closed-loop load test");
  lg_cmd->add_option("--url", plan.url);
  lg_cmd->add_option("--token", plan.token)->required();
  lg_cmd->add_option("--requests", lg_requests, "Total requests");
  lg_cmd->add_option("--concurrency", plan.concurrency);
  lg_cmd->add_option("--duration-fallback", lg_duration, "Seconds to run when --requests is not given");
  auto* corpus_opt = lg_cmd->add_option("--corpus", lg_corpus, "Directory of request JSON files");
  auto* synth_opt = lg_cmd->add_option("--synthetic", lg_synthetic, "kind[:seconds[:leads]]");
  corpus_opt->excludes(synth_opt);
  lg_cmd->add_option("--payloads", lg_pool, "Distinct synthetic payloads");
  lg_cmd->add_option("--seed", lg_seed);
  lg_cmd->add_option("--out", lg_out, "Report JSON");
  lg_cmd->add_option("--histogram", lg_hist, "Histogram CSV");
  lg_cmd->add_option("--records", lg_records, "Raw per-request CSV");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*serve_cmd) return run_serve(serve_opts);

    if (*init_cmd) {
      const auto leads = parse_leads(init_leads);
      auto cfg = init_toy ? model::toy_config(leads) : model::default_config(leads);
      cfg.labels = select_labels(init_labels);
      nn::save_bundle_file(model::CardioNet::build(cfg, init_seed).to_bundle(), init_out);
      return 0;
    }

    if (*train_cmd) {
      const auto leads = parse_leads(train_leads);
      auto cfg = train_toy ? model::toy_config(leads) : model::default_config(leads);
      cfg.labels = select_labels(train_labels);
      const auto train_recs = train::synthetic_af_corpus(train_n, train_duration, 250.0, tc.seed * 2 + 1, leads);
      const auto val_recs = train::synthetic_af_corpus(val_n, train_duration, 250.0, tc.seed * 2 + 2, leads);
      auto net = model::CardioNet::build(cfg, tc.seed);
      const auto ledger = train::fit(net, train::make_dataset(cfg, train_recs), train::make_dataset(cfg, val_recs), tc);
      for (const auto& v : ledger.validations) {
        std::cout << "batch " << v.batch << " macro_auc " << v.macro_auc << " lr " << v.learning_rate << '\n';
      }
      nn::save_bundle_file(ledger.macro_best.bundle, train_out);
      std::cout << "best macro AUC " << ledger.macro_best.auc << " at batch " << ledger.macro_best.batch << '\n';
      return 0;
    }

    if (*synth_cmd) {
      auto spec = synth_kind == "af" ? train::SyntheticBeatSpec::af_like(synth_bpm)
                                     : train::SyntheticBeatSpec::sinus(synth_bpm);
      spec.noise_std_mv = synth_noise;
      const auto rec = parse_leads(synth_leads) == ecg::LeadConfiguration::SingleLead
                           ? train::generate_recording(spec, synth_duration, synth_rate, synth_seed)
                           : train::generate_twelve_lead(spec, synth_duration, synth_rate, synth_seed);
      ecg::LeadMap adc;
      for (const auto& [lead, samples] : rec.recording.leads()) {
        std::vector<double> rounded(samples.size());
        std::transform(samples.begin(), samples.end(), rounded.begin(), [](double v) { return std::round(v); });
        adc.emplace(lead, std::move(rounded));
      }
      if (synth_format == "json") {
        api::WireRequest req{synth_rate, train::kSyntheticAdcGain, 0.0, std::move(adc)};
        write_file(synth_out, api::serialize_request(req));
      } else {
        write_file(synth_out, ecg::to_csv(adc));
      }
      return 0;
    }

    if (*predict_cmd) {
      const auto net = model::CardioNet::from_bundle(nn::load_bundle_file(predict_model));
      const ecg::EcgRecording rec({predict_rate, predict_gain, predict_baseline}, ecg::parse_csv(read_file(predict_csv)));
      const auto result = model::predict(net, rec);
      nlohmann::json out;
      out["model"] = std::string(ecg::to_string(net.config().lead_configuration));
      for (std::size_t i = 0; i < net.config().labels.size(); ++i) {
        out["predictions"].push_back({{"code", net.config().labels[i].code},
                                      {"probability", result.prediction.probabilities[i]}});
      }
      if (result.measurements) {
        out["measurements"] = {{"heartRateBpm", result.measurements->heart_rate_bpm},
                               {"rrMeanMs", result.measurements->rr_mean_ms},
                               {"rrStdMs", result.measurements->rr_std_ms}};
      } else {
        out["measurements"] = nullptr;
      }
      std::cout << out.dump(2) << '\n';
      return 0;
    }

    if (*roc_cmd) {
      std::vector<double> scores;
      std::vector<int> labels;
      std::stringstream in(read_file(roc_in));
      std::string line;
      while (std::getline(in, line)) {
        if (line.empty() || line.rfind("score", 0) == 0) continue;
        const auto comma = line.find(',');
        if (comma == std::string::npos) throw ValidationError("MALFORMED_CSV", "expected score,label");
        scores.push_back(std::stod(line.substr(0, comma)));
        labels.push_back(std::stoi(line.substr(comma + 1)));
      }
      std::cout << "auc " << metrics::roc_auc(scores, labels) << '\n';
      if (!roc_curve_out.empty()) write_file(roc_curve_out, metrics::roc_curve_csv(metrics::roc_curve(scores, labels)));
      return 0;
    }

    if (*lg_cmd) {
      if (lg_requests > 0) {
        plan.total_requests = lg_requests;
      } else if (lg_duration > 0.0) {
        plan.duration_s = lg_duration;
      } else {
        throw ValidationError("INVALID_PLAN", "give --requests or --duration-fallback");
      }
      if (!lg_corpus.empty()) {
        plan.payloads = loadgen::corpus_payloads(lg_corpus);
      } else {
        const auto source = loadgen::SyntheticSource::parse(lg_synthetic.empty() ? "mix:30:single" : lg_synthetic);
        plan.payloads = loadgen::synthetic_payloads(source, lg_pool, lg_seed);
      }
      const auto report = loadgen::run(plan);
      const auto doc = loadgen::report_json(report);
      std::cout << doc.dump(2) << '\n';
      if (!lg_out.empty()) write_file(lg_out, doc.dump(2) + "\n");
      if (!lg_hist.empty()) write_file(lg_hist, loadgen::histogram_csv(report.summary));
      if (!lg_records.empty()) write_file(lg_records, loadgen::records_csv(report.records));
      return report.complete ? 0 : 3;
    }
  } catch (const Error& e) {
    std::cerr << "error " << e.code() << ": " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  }
  return 0;
}
