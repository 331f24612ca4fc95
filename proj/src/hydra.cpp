#include "hydra/hydra.hpp"

#include <algorithm>
#include <array>
#include <charconv>
#include <cmath>
#include <istream>
#include <ostream>

#include "hydra/error.hpp"

namespace hydra {

namespace {

template <class... Ts>
struct Overloaded : Ts... {
    using Ts::operator()...;
};
template <class... Ts>
Overloaded(Ts...) -> Overloaded<Ts...>;

std::size_t candidate_index(const HydraModel& model, const std::string& id) {
    for (std::size_t i = 0; i < model.candidates.size(); ++i)
        if (model.candidates[i].spec.candidate_id == id) return i;
    throw ConfigError("selector chose candidate '" + id + "' which is not in the model");
}

// Returns (watts, scale factor).
std::pair<double, double> dispatch(const CandidateModel& model, const ServerProfile& profile, const StatSample& s) {
    return std::visit(
        Overloaded{
            [&](const AnalyticalModel& m) {
                const double watts = analytical_predict(m, profile, std::clamp(s.cpu_util_pct / 100.0, 0.0, 1.0));
                return std::pair{watts, watts_to_scale(watts, profile)};
            },
            [&](const MlpModel& m) {
                const double sf = mlp_forward(m, normalize(s, m.norm_stats));
                return std::pair{scale_to_watts(sf, profile), sf};
            },
        },
        model);
}

PowerPrediction make_prediction(const Candidate& c, const ServerProfile& profile, const StatSample& s, bool invoked) {
    const auto [watts, sf] = dispatch(c.model, profile, s);
    return PowerPrediction{s.timestamp, watts, sf, c.spec.candidate_id, invoked, s.measured_power_watts};
}

}  // namespace

double watts_to_scale(double watts, const ServerProfile& p) {
    return (watts - p.idle_power_watts) / (p.max_power_watts - p.idle_power_watts);
}

double scale_to_watts(double sf, const ServerProfile& p) {
    return p.idle_power_watts + sf * (p.max_power_watts - p.idle_power_watts);
}

std::string_view kind_name(const CandidateModel& model) noexcept {
    return std::holds_alternative<AnalyticalModel>(model) ? "analytical" : "mlp";
}

int default_overhead_rank(const CandidateModel& model) noexcept {
    return std::holds_alternative<AnalyticalModel>(model) ? 0 : 1;
}

double candidate_predict_watts(const CandidateModel& model, const ServerProfile& profile, const StatSample& sample) {
    return dispatch(model, profile, sample).first;
}

void validate_hydra(const HydraModel& m) {
    validate_profile(m.profile);
    if (m.selection_interval < 1) throw ConfigError("hydra: selection_interval must be >= 1");
    std::vector<CandidateSpec> specs;
    for (const auto& c : m.candidates) {
        specs.push_back(c.spec);
        if (const auto* mlp = std::get_if<MlpModel>(&c.model)) validate_mlp(*mlp);
        if (const auto* a = std::get_if<AnalyticalModel>(&c.model)) make_analytical(a->alpha);
    }
    validate_candidates(specs);
    validate_forest(m.forest);
    for (const auto& id : m.forest.candidate_ids) candidate_index(m, id);
}

PowerPrediction hydra_predict(const HydraModel& model, const StatSample& sample, SelectionState& state) {
    const bool invoke = state.sample_index % model.selection_interval == 0;
    if (invoke) {
        const auto cls = forest_predict_index(model.forest, normalize(sample, model.norm_stats));
        state.cached_candidate = candidate_index(model, model.forest.candidate_ids[cls]);
    }
    ++state.sample_index;
    return make_prediction(model.candidates.at(state.cached_candidate), model.profile, sample, invoke);
}

std::vector<PowerPrediction> detail::run_over_trace_serial(const HydraModel& model, const Trace& trace) {
    std::vector<PowerPrediction> out;
    out.reserve(trace.size());
    SelectionState state;
    for (const auto& s : trace.samples) out.push_back(hydra_predict(model, s, state));
    return out;
}

std::vector<PowerPrediction> run_over_trace(const HydraModel& model, const Trace& trace) {
    if (model.selection_interval < 1) throw ConfigError("hydra: selection_interval must be >= 1");
    const std::size_t n = trace.size();
    const std::size_t interval = model.selection_interval;
    const std::size_t n_select = (n + interval - 1) / interval;

    // forest class index -> position in model.candidates
    std::vector<std::size_t> class_to_candidate;
    for (const auto& id : model.forest.candidate_ids) class_to_candidate.push_back(candidate_index(model, id));

    std::vector<FeatureVector> selector_inputs(n_select);
    for (std::size_t k = 0; k < n_select; ++k) selector_inputs[k] = normalize(trace.samples[k * interval], model.norm_stats);
    const auto choices = forest_predict_batch(model.forest, selector_inputs);

    std::vector<PowerPrediction> out(n);
    const auto nn = static_cast<std::ptrdiff_t>(n);
#pragma omp parallel for schedule(static)
    for (std::ptrdiff_t i = 0; i < nn; ++i) {
        const auto idx = static_cast<std::size_t>(i);
        const auto& c = model.candidates[class_to_candidate[choices[idx / interval]]];
        out[idx] = make_prediction(c, model.profile, trace.samples[idx], idx % interval == 0);
    }
    return out;
}

std::vector<PowerPrediction> run_single_over_trace(const CandidateModel& model, const std::string& candidate_id,
                                                   const ServerProfile& profile, const Trace& trace) {
    std::vector<PowerPrediction> out;
    out.reserve(trace.size());
    const Candidate c{{candidate_id, default_overhead_rank(model)}, model};
    for (const auto& s : trace.samples) out.push_back(make_prediction(c, profile, s, false));
    return out;
}

HydraModel make_single_candidate_hydra(Candidate candidate, const ServerProfile& profile,
                                       const NormalizationStats& norm) {
    HydraModel m;
    DecisionTree leaf;
    leaf.nodes.push_back(DecisionTree::Node{-1, 0.0, -1, -1, {1}});
    m.forest.trees.push_back(std::move(leaf));
    m.forest.feature_subsample_k = kNumFeatures;
    m.forest.candidate_ids = {candidate.spec.candidate_id};
    m.candidates.push_back(std::move(candidate));
    m.norm_stats = norm;
    m.profile = profile;
    return m;
}

namespace {

void put_double(std::ostream& out, double v) {
    std::array<char, 32> buf{};
    const auto res = std::to_chars(buf.data(), buf.data() + buf.size(), v);
    out.write(buf.data(), res.ptr - buf.data());
}

constexpr std::array<std::string_view, 6> kPredictionColumns = {
    "timestamp", "predicted_watts", "scale_factor", "chosen_model", "selector_invoked", "measured_power_watts"};

std::vector<std::string_view> split_commas(std::string_view line) {
    std::vector<std::string_view> cells;
    std::size_t start = 0;
    while (true) {
        const auto comma = line.find(',', start);
        cells.push_back(line.substr(start, comma == std::string_view::npos ? std::string_view::npos : comma - start));
        if (comma == std::string_view::npos) return cells;
        start = comma + 1;
    }
}

double parse_cell(std::string_view text, std::size_t line, std::string_view field) {
    double v = 0.0;
    const auto res = std::from_chars(text.data(), text.data() + text.size(), v);
    if (res.ec != std::errc{} || res.ptr != text.data() + text.size() || text.empty())
        throw ParseError(line, std::string(field), "not a number: '" + std::string(text) + "'");
    if (!std::isfinite(v)) throw ParseError(line, std::string(field), "value is not finite");
    return v;
}

}  // namespace

void write_predictions_csv(std::ostream& out, std::span<const PowerPrediction> predictions) {
    const bool truth = !predictions.empty() && std::all_of(predictions.begin(), predictions.end(),
                                                           [](const PowerPrediction& p) { return p.measured_power_watts.has_value(); });
    out << "timestamp,predicted_watts,scale_factor,chosen_model,selector_invoked";
    if (truth) out << ",measured_power_watts";
    out << '\n';
    for (const auto& p : predictions) {
        put_double(out, p.timestamp);
        out << ',';
        put_double(out, p.predicted_watts);
        out << ',';
        put_double(out, p.scale_factor);
        out << ',' << p.chosen_model << ',' << (p.selector_invoked ? 1 : 0);
        if (truth) {
            out << ',';
            put_double(out, *p.measured_power_watts);
        }
        out << '\n';
    }
}

std::vector<PowerPrediction> parse_predictions_csv(std::istream& in) {
    std::string raw;
    std::size_t line_no = 0;
    std::size_t n_cols = 0;
    std::vector<PowerPrediction> out;
    while (std::getline(in, raw)) {
        ++line_no;
        std::string_view line(raw);
        if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
        if (line.empty()) continue;
        const auto cells = split_commas(line);
        if (n_cols == 0) {
            if (cells.size() < 5 || cells.size() > 6) throw ParseError(line_no, "", "unexpected prediction CSV header");
            for (std::size_t i = 0; i < cells.size(); ++i)
                if (cells[i] != kPredictionColumns[i])
                    throw ParseError(line_no, std::string(kPredictionColumns[i]), "expected this column in the header");
            n_cols = cells.size();
            continue;
        }
        if (cells.size() != n_cols)
            throw ParseError(line_no, "", "expected " + std::to_string(n_cols) + " cells, found " + std::to_string(cells.size()));
        PowerPrediction p;
        p.timestamp = parse_cell(cells[0], line_no, "timestamp");
        p.predicted_watts = parse_cell(cells[1], line_no, "predicted_watts");
        p.scale_factor = parse_cell(cells[2], line_no, "scale_factor");
        if (cells[3].empty()) throw ParseError(line_no, "chosen_model", "required value is empty");
        p.chosen_model = std::string(cells[3]);
        if (cells[4] != "0" && cells[4] != "1") throw ParseError(line_no, "selector_invoked", "expected 0 or 1");
        p.selector_invoked = cells[4] == "1";
        if (n_cols == 6) p.measured_power_watts = parse_cell(cells[5], line_no, "measured_power_watts");
        out.push_back(std::move(p));
    }
    if (n_cols == 0) throw ParseError(0, "", "empty input: no header");
    return out;
}

}  // namespace hydra
