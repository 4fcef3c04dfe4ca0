#include "dasa/diagnostics.hpp"

#include <cmath>
#include <map>
#include <sstream>

#include "dasa/errors.hpp"

namespace dasa::diag {

MicroModel make_micro_model(EncoderRole role, std::uint64_t seed) {
  MicroModel m;
  m.gen = scene::GenConfig::defaults();
  m.gen.k_min = m.gen.k_max = 4;
  m.gen.max_group = 2;
  m.gen.points_per_object = 8;
  m.gen.num_scenes = 1;
  const scene::Corpus corpus = scene::generate_corpus(m.gen, seed);
  const net::InputSpace space = net::InputSpace::from_config(m.gen);

  m.cfg.d = 16;
  m.cfg.heads = 2;
  m.cfg.layers = 2;
  m.cfg.text_layers = 2;
  m.cfg.point_hidden = 16;
  space.apply_to(m.cfg);
  m.params = ParamStore(seed);
  net::register_model(m.params, m.cfg, role);
  m.example = train::build_examples(corpus, corpus.records, space, m.gen,
                                    role == EncoderRole::student)
                  .front();
  return m;
}

GradCheckReport check_micro_model(EncoderRole role, std::uint64_t seed,
                                  const GradientTamper& tamper) {
  MicroModel m = make_micro_model(role, seed);
  train::StageConfig stage;
  stage.kind = train::StageKind::fine_tune;
  stage.role = role;
  auto loss = [&] { return train::example_loss(m.example, m.params, m.cfg, stage, nullptr).total; };
  return finite_diff_check(loss, m.params, 1e-5, tamper);
}

std::vector<InspectRow> inspect(const scene::Scene& scene, const scene::DescriptionRecord& record,
                                const train::Example& example, const ParamStore& ps,
                                const ModelConfig& cfg, EncoderRole role) {
  if (record.scene_id != scene.id || example.record_id != record.id) {
    throw ContractError("inspect: scene, record and example disagree");
  }
  const net::GroundingResult r = net::predict(example.input, ps, cfg, role);
  const std::string& target_cat = scene.object(record.target_id).category;
  std::vector<InspectRow> rows;
  for (std::size_t i = 0; i < scene.objects.size(); ++i) {
    const auto& o = scene.objects[i];
    InspectRow row;
    row.object_id = o.id;
    row.category = o.category;
    row.color = o.color;
    row.s_att = r.scores.att[i];
    row.s_spa = r.scores.spa[i];
    row.s = r.scores.total[i];
    row.is_target = o.id == record.target_id;
    row.is_distractor = !row.is_target && o.category == target_cat;
    rows.push_back(row);
  }
  return rows;
}

std::string to_csv(const std::vector<InspectRow>& rows) {
  std::ostringstream os;
  os.precision(17);
  os << "object_id,category,color,s_att,s_spa,s,is_target,is_distractor\n";
  for (const auto& r : rows) {
    if (r.s != r.s_att + r.s_spa) {
      throw NumericalError("inspect: s != s_att + s_spa for object " + std::to_string(r.object_id));
    }
    os << r.object_id << ',' << r.category << ',' << r.color << ',' << r.s_att << ',' << r.s_spa
       << ',' << r.s << ',' << (r.is_target ? 1 : 0) << ',' << (r.is_distractor ? 1 : 0) << '\n';
  }
  return os.str();
}

train::Metrics evaluate_oracle(const scene::Corpus& corpus,
                               const std::vector<scene::DescriptionRecord>& records,
                               const std::vector<train::Example>& examples,
                               const scene::RelationGeometry& geometry) {
  if (records.size() != examples.size()) {
    throw ContractError("evaluate_oracle: records and examples differ in length");
  }
  std::vector<train::Prediction> preds;
  for (const auto& r : records) {
    const scene::Scene& s = corpus.scene(r.scene_id);
    const auto sat = scene::oracle_satisfiers(s, r.relations, r.filter, geometry);
    const std::size_t idx = sat.empty() ? 0 : s.index_of(*sat.begin());
    preds.push_back({idx, idx, idx});
  }
  return train::summarize(examples, preds);
}

double stddev(const std::vector<double>& v) {
  if (v.empty()) throw ContractError("stddev of empty set");
  double mean = 0.0;
  for (double x : v) mean += x;
  mean /= static_cast<double>(v.size());
  double ss = 0.0;
  for (double x : v) ss += (x - mean) * (x - mean);
  return std::sqrt(ss / static_cast<double>(v.size()));
}

SpreadReport within_category_spread(const std::vector<train::Example>& examples,
                                    const ParamStore& ps, const ModelConfig& cfg,
                                    EncoderRole role) {
  SpreadReport rep;
  for (const auto& ex : examples) {
    std::map<std::size_t, std::size_t> counts;
    for (std::size_t c : ex.input.category_ids) ++counts[c];
    std::optional<std::size_t> group;
    if (counts[ex.input.target_category] >= 3) {
      group = ex.input.target_category;
    } else {
      std::size_t best = 2;
      for (const auto& [c, n] : counts) {
        if (n > best) {
          best = n;
          group = c;
        }
      }
    }
    if (!group) continue;
    const net::GroundingResult r = net::predict(ex.input, ps, cfg, role);
    std::vector<double> att, spa;
    for (std::size_t i = 0; i < ex.input.category_ids.size(); ++i) {
      if (ex.input.category_ids[i] != *group) continue;
      att.push_back(r.scores.att[i]);
      spa.push_back(r.scores.spa[i]);
    }
    ++rep.scenes;
    rep.att_tighter += stddev(att) < stddev(spa);
  }
  return rep;
}

}  // namespace dasa::diag
