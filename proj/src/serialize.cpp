#include "paircfr/serialize.hpp"

#include "json.hpp"

namespace paircfr {

namespace {

using nlohmann::json;

json seed_result_json(const SeedResult& r) {
  json j{{"seed", r.seed},
         {"failed", r.failed},
         {"id_accuracy", r.id_accuracy},
         {"ood_accuracy", r.ood_accuracy},
         {"block_masses", r.block_masses},
         {"stopping_epoch", r.stopping_epoch},
         {"best_epoch", r.best_epoch}};
  if (r.failed) j["error"] = r.error;
  return j;
}

SeedResult seed_result_from(const json& j) {
  SeedResult r;
  r.seed = j.at("seed").get<std::uint64_t>();
  r.failed = j.at("failed").get<bool>();
  if (r.failed && j.contains("error")) r.error = j.at("error").get<std::string>();
  r.id_accuracy = j.at("id_accuracy").get<double>();
  r.ood_accuracy = j.at("ood_accuracy").get<std::map<std::string, double>>();
  const auto masses = j.at("block_masses");
  for (std::size_t i = 0; i < 3; ++i) r.block_masses[i] = masses.at(i);
  r.stopping_epoch = j.at("stopping_epoch").get<std::size_t>();
  r.best_epoch = j.at("best_epoch").get<std::size_t>();
  return r;
}

json report_json(const RunReport& report) {
  json per_seed = json::array();
  for (const SeedResult& r : report.per_seed)
    per_seed.push_back(seed_result_json(r));
  json aggregates = json::object();
  for (const auto& [name, agg] : report.aggregates)
    aggregates[name] = {{"mean", agg.mean}, {"std", agg.stddev}};
  return json{{"per_seed", std::move(per_seed)},
              {"aggregates", std::move(aggregates)}};
}

RunReport report_from(const json& j) {
  RunReport report;
  for (const auto& row : j.at("per_seed"))
    report.per_seed.push_back(seed_result_from(row));
  for (const auto& [name, agg] : j.at("aggregates").items())
    report.aggregates[name] =
        Aggregate{agg.at("mean").get<double>(), agg.at("std").get<double>()};
  return report;
}

}  // namespace

std::string history_to_json(const TrainHistory& history) {
  json epochs = json::array();
  for (const EpochStats& e : history.epochs)
    epochs.push_back({{"train_loss", e.train_loss},
                      {"valid_loss", e.valid_loss},
                      {"valid_accuracy", e.valid_accuracy}});
  json j{{"epochs", std::move(epochs)},
         {"stopping_epoch", history.stopping_epoch},
         {"best_epoch", history.best_epoch},
         {"best_valid_loss", history.best_valid_loss},
         {"seed_chain", history.seed_chain}};
  return j.dump(2);
}

std::string run_report_to_json(const RunReport& report) {
  return report_json(report).dump(2);
}

RunReport run_report_from_json(const std::string& text) {
  return report_from(json::parse(text));
}

std::string sweep_report_to_json(const SweepReport& report) {
  json cells = json::array();
  for (const SweepCell& cell : report.cells) {
    json j{{"lambda", cell.lambda},
           {"tau", cell.tau},
           {"batch_size", cell.batch_size},
           {"n_pairs", cell.n_pairs},
           {"k", cell.k},
           {"failed", cell.failed}};
    if (cell.failed)
      j["error"] = cell.error;
    else
      j["report"] = report_json(cell.report);
    cells.push_back(std::move(j));
  }
  return json{{"cells", std::move(cells)}}.dump(2);
}

}  // namespace paircfr
