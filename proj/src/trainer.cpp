#include "tkg/trainer.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>

namespace tkg {

void Adam::step(std::vector<Param>& params, const std::vector<Tensor>& grads) {
  if (m1.empty()) {
    for (const auto& p : params) {
      m1.emplace_back(p.value.shape);
      m2.emplace_back(p.value.shape);
    }
  }
  t += 1;
  const double bc1 = 1.0 - std::pow(beta1, double(t));
  const double bc2 = 1.0 - std::pow(beta2, double(t));
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto& p = params[i].value.data;
    const auto& g = grads[i].data;
    auto& m = m1[i].data;
    auto& v = m2[i].data;
    for (std::size_t j = 0; j < p.size(); ++j) {
      m[j] = beta1 * m[j] + (1.0 - beta1) * g[j];
      v[j] = beta2 * v[j] + (1.0 - beta2) * g[j] * g[j];
      const double mh = m[j] / bc1;
      const double vh = v[j] / bc2;
      p[j] -= lr * mh / (std::sqrt(vh) + eps);
    }
  }
}

static std::string param_norms(const Model& model) {
  std::string s;
  for (const auto& p : model.params) {
    double sq = 0.0;
    for (const double v : p.value.data) sq += v * v;
    char buf[64];
    std::snprintf(buf, sizeof buf, " %s=%.6g", p.name.c_str(), std::sqrt(sq));
    s += buf;
  }
  return s;
}

double train_epoch(Model& model, Adam& opt, std::size_t epoch_index) {
  const auto snaps = split_snapshots(*model.ds, Split::train);
  StepOptions so;
  so.score = true;
  so.grads = true;

  double loss_sum = 0.0;
  std::size_t steps = 0;
  for (const auto& snap : snaps) {
    StepResult sr = model.process_timestamp(snap, so);
    if (sr.has_loss) {
      if (!std::isfinite(sr.loss)) {
        std::string msg = "non-finite loss at epoch " + std::to_string(epoch_index) +
                          ", step " + std::to_string(steps) + " (timestamp " +
                          std::to_string(snap.t) + ")";
        for (const auto& q : sr.queries)
          if (!std::isfinite(q.ce)) {
            const auto& f = model.ds->facts[q.fact_index];
            msg += "; first bad query (" + model.ds->entity_names[f.subject] + ", " +
                   model.ds->relation_names[f.relation] + ", " +
                   model.ds->entity_names[f.object] + ", t=" + std::to_string(f.timestamp) + ")";
            break;
          }
        msg += "; parameter norms:" + param_norms(model);
        throw NumericError(msg);
      }
      opt.step(model.params, sr.grads);
      loss_sum += sr.loss;
      steps += 1;
    }
    model.commit_timestamp(snap);
  }
  return steps > 0 ? loss_sum / double(steps) : 0.0;
}

FitResult fit(Model& model, const TrainConfig& tc) {
  if (tc.early_metric != "all" && tc.early_metric != "emerging")
    throw std::invalid_argument("early-stop metric must be 'all' or 'emerging'");
  Adam opt;
  opt.lr = tc.lr;

  FilterIndex fidx;
  fidx.build(*model.ds);
  const auto train_snaps = split_snapshots(*model.ds, Split::train);

  FitResult res;
  std::vector<Tensor> best_params;

  for (std::size_t epoch = 1; epoch <= tc.max_epochs; ++epoch) {
    model.reset_state();
    model.refresh_assignments();

    const auto t0 = std::chrono::steady_clock::now();
    const double train_loss = train_epoch(model, opt, epoch);
    const auto t1 = std::chrono::steady_clock::now();
    model.refresh_cluster_decays();

    // validation sees the post-epoch parameters through a fresh replay
    model.reset_state();
    replay_window(model, train_snaps);
    EvalOptions eo;
    RankReport vr = evaluate(model, Split::valid, fidx, eo);

    EpochRow row;
    row.epoch = epoch;
    row.train_loss = train_loss;
    row.valid_mrr_all = vr.all.mrr;
    row.valid_mrr_emerging = vr.emerging.mrr;
    row.seconds = std::chrono::duration<double>(t1 - t0).count();
    row.param_count = model.param_count();
    res.curve.push_back(row);
    if (tc.log)
      *tc.log << "epoch " << epoch << " loss " << train_loss << " valid-mrr " << vr.all.mrr
              << " emerging " << vr.emerging.mrr << "\n";

    const double metric = tc.early_metric == "emerging" ? vr.emerging.mrr : vr.all.mrr;
    if (res.best_epoch == 0 || metric > res.best_metric) {
      res.best_epoch = epoch;
      res.best_metric = metric;
      res.best_valid_mrr_all = vr.all.mrr;
      res.best_valid_mrr_emerging = vr.emerging.mrr;
      best_params.clear();
      for (const auto& p : model.params) best_params.push_back(p.value);
    }
    if (epoch - res.best_epoch >= tc.patience) break;
  }
  res.epochs_run = res.curve.size();

  for (std::size_t i = 0; i < best_params.size(); ++i) model.params[i].value = best_params[i];
  model.refresh_assignments();
  model.refresh_cluster_decays();
  return res;
}

void write_curve_csv(const std::vector<EpochRow>& curve, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open " + path + " for writing");
  out << "epoch,train_loss,valid_mrr_emerging,valid_mrr_all,seconds,param_count\n";
  char buf[160];
  for (const auto& r : curve) {
    std::snprintf(buf, sizeof buf, "%zu,%.17g,%.17g,%.17g,%.6g,%zu\n", r.epoch, r.train_loss,
                  r.valid_mrr_emerging, r.valid_mrr_all, r.seconds, r.param_count);
    out << buf;
  }
}

} // namespace tkg
