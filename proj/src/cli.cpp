#include "cvqkd/cli.hpp"

#include "cvqkd/harness.hpp"
#include "cvqkd/reconciliation.hpp"
#include "cvqkd/rng.hpp"
#include "cvqkd/security.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <array>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>

namespace cvqkd {

namespace {

using ordered_json = nlohmann::ordered_json;

std::string fmt(double x) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.12g", x);
    return buf;
}

void write_output(const std::string& text, const std::string& path, std::ostream& out) {
    if (path.empty()) {
        out << text;
        return;
    }
    std::ofstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("cannot open output file: " + path);
    f << text;
}

std::string bits_to_hex(const std::vector<std::uint8_t>& bits) {
    std::string hex;
    hex.reserve(bits.size() / 4 + 2);
    for (std::size_t i = 0; i < bits.size(); i += 4) {
        unsigned nibble = 0;
        for (std::size_t j = 0; j < 4 && i + j < bits.size(); ++j)
            nibble |= static_cast<unsigned>(bits[i + j] & 1u) << j;
        hex += "0123456789abcdef"[nibble];
    }
    return hex;
}

ProtocolMode parse_mode(const std::string& mode) {
    if (mode == "coherent") return ProtocolMode::coherent;
    if (mode == "squeezed") return ProtocolMode::squeezed;
    if (mode == "epr") return ProtocolMode::epr;
    throw CLI::ValidationError("--mode", "expected one of coherent|squeezed|epr");
}

void require_format(const std::string& format, std::initializer_list<const char*> allowed) {
    for (const char* a : allowed)
        if (format == a) return;
    throw CLI::ValidationError("--format", "unsupported format for this command: " + format);
}

/// Shared channel/protocol flag block.
struct CommonParams {
    std::optional<double> g;
    std::optional<double> loss_db;
    double v = 10.0;
    double eps = 0.0;
    std::string mode = "coherent";
    std::optional<double> s;
    std::optional<double> mu;
    double n0 = 1.0;

    void add_channel_flags(CLI::App* cmd) {
        auto* og = cmd->add_option("--g", g, "channel gain G");
        auto* ol = cmd->add_option("--loss-db", loss_db, "line losses in dB (G = 10^(-dB/10))");
        og->excludes(ol);
        ol->excludes(og);
        cmd->add_option("--eps", eps, "excess noise in shot-noise units")->check(CLI::NonNegativeNumber);
        cmd->add_option("--v", v, "modulation variance V (n0 units)");
        cmd->add_option("--n0", n0, "shot-noise unit")->check(CLI::PositiveNumber);
    }

    void add_protocol_flags(CLI::App* cmd) {
        cmd->add_option("--mode", mode, "preparation: coherent|squeezed|epr");
        cmd->add_option("--s", s, "transmitted squeezing (squeezed mode)");
        cmd->add_option("--mu", mu, "joint-measurement asymmetry (sets s)");
    }

    double gain() const {
        if (g && loss_db) throw CLI::ValidationError("--g", "give either --g or --loss-db");
        if (loss_db) {
            if (*loss_db < 0.0 || *loss_db > 40.0)
                throw CLI::ValidationError("--loss-db", "loss range is [0, 40] dB");
            return loss_db_to_gain(*loss_db);
        }
        if (g) return *g;
        return 1.0;
    }

    double squeezing() const {
        const ProtocolMode pm = parse_mode(mode);
        if (pm == ProtocolMode::squeezed) {
            if (s) return *s;
            if (mu) return squeezing_of(v, *mu);
            throw CLI::ValidationError("--mode", "squeezed mode needs --s or --mu");
        }
        if (pm == ProtocolMode::coherent) return mu ? squeezing_of(v, *mu) : 1.0;
        return 1.0 / v; // epr
    }
};

// ---------------------------------------------------------------------------
// security-curve

int cmd_security_curve(double db_min, double db_max, int points, double v,
                       const std::vector<std::string>& curves, bool clip_dr,
                       const std::string& format, const std::string& out_path,
                       std::ostream& out) {
    if (db_min < 0.0 || db_max > 40.0 || db_min >= db_max)
        throw CLI::ValidationError("--loss-db-min/max", "loss range is [0, 40] dB");
    if (points < 2) throw CLI::ValidationError("--points", "need at least 2 points");
    require_format(format, {"csv", "json"});

    auto wants = [&curves](const std::string& c) {
        return curves.empty() || std::find(curves.begin(), curves.end(), c) != curves.end();
    };
    const bool want_dr = wants("dr"), want_coh = wants("rr_coh"), want_epr = wants("rr_epr"),
               want_ent = wants("entanglement");

    const std::vector<std::string> columns = {"loss_db",        "g",
                                              "eps_max_dr",     "eps_max_rr_coh",
                                              "eps_max_rr_epr", "eps_entanglement"};
    std::vector<std::array<std::optional<double>, 6>> rows;
    rows.reserve(static_cast<std::size_t>(points));
    for (int i = 0; i < points; ++i) {
        const double db = db_min + (db_max - db_min) * i / (points - 1);
        const double g = loss_db_to_gain(db);
        std::array<std::optional<double>, 6> row;
        row[0] = db;
        row[1] = g;
        if (want_dr) {
            double dr = dr_threshold(g);
            if (clip_dr && dr < 0.0) dr = 0.0;
            row[2] = dr;
        }
        if (want_coh) row[3] = epsilon_max_coh(g, v);
        if (want_epr) row[4] = epsilon_max_rr(g, v, 1.0 / v);
        if (want_ent) row[5] = 2.0;
        rows.push_back(row);
    }

    if (format == "json") {
        ordered_json j;
        j["schema"] = "cvqkd.security_curve.v1";
        j["columns"] = columns;
        auto& jrows = j["rows"];
        for (const auto& row : rows) {
            ordered_json jrow = ordered_json::array();
            for (const auto& cell : row)
                jrow.push_back(cell ? ordered_json(*cell) : ordered_json(nullptr));
            jrows.push_back(jrow);
        }
        write_output(j.dump(2) + "\n", out_path, out);
        return kExitOk;
    }

    std::string csv = "# cvqkd.security_curve.v1\n";
    for (std::size_t c = 0; c < columns.size(); ++c)
        csv += columns[c] + (c + 1 < columns.size() ? "," : "\n");
    for (const auto& row : rows) {
        for (std::size_t c = 0; c < row.size(); ++c) {
            if (row[c]) csv += fmt(*row[c]);
            csv += c + 1 < row.size() ? "," : "\n";
        }
    }
    write_output(csv, out_path, out);
    return kExitOk;
}

// ---------------------------------------------------------------------------
// keyrate

ordered_json report_to_json(const SecurityReport& r) {
    ordered_json j;
    j["schema"] = "cvqkd.report.v1";
    j["config"] = {{"g", r.g},   {"loss_db", gain_to_loss_db(r.g)},
                   {"eps", r.eps}, {"chi", r.chi},
                   {"v", r.v},   {"mode", to_string(r.mode)},
                   {"s", r.s}};
    j["basis_sifting_factor"] = r.basis_sifting_factor;
    j["i_ba"] = r.i_ba;
    j["i_be"] = r.i_be;
    j["delta_i_rr"] = r.delta_i_rr;
    j["eps_max_rr"] = r.eps_max_rr;
    j["eps_max_dr"] = r.eps_max_dr;
    j["rr_secure"] = r.rr_secure;
    j["dr_secure"] = r.dr_secure;
    j["entangled"] = r.entangled;
    j["separability_margin"] = r.separability_margin;
    if (r.beta) {
        j["beta"] = *r.beta;
        j["practical_rate"] = *r.practical;
        if (r.beta_star_value) j["beta_star"] = *r.beta_star_value;
    }
    return j;
}

int cmd_keyrate(const CommonParams& p, std::optional<double> beta, const std::string& format,
                const std::string& out_path, std::ostream& out) {
    require_format(format, {"json", "csv"});
    const auto ch = ChannelModel::from_gain_excess(p.gain(), p.eps);
    SecurityReport r = analyze(ch, p.v, parse_mode(p.mode), p.squeezing(), beta);
    if (format == "csv") {
        std::string csv = "# cvqkd.report.v1\n";
        csv += "g,loss_db,eps,chi,v,mode,s,i_ba,i_be,delta_i_rr,eps_max_rr,eps_max_dr,"
               "rr_secure,dr_secure,entangled\n";
        csv += fmt(r.g) + "," + fmt(gain_to_loss_db(r.g)) + "," + fmt(r.eps) + "," + fmt(r.chi) +
               "," + fmt(r.v) + "," + to_string(r.mode) + "," + fmt(r.s) + "," + fmt(r.i_ba) +
               "," + fmt(r.i_be) + "," + fmt(r.delta_i_rr) + "," + fmt(r.eps_max_rr) + "," +
               fmt(r.eps_max_dr) + "," + (r.rr_secure ? "1" : "0") + "," +
               (r.dr_secure ? "1" : "0") + "," + (r.entangled ? "1" : "0") + "\n";
        write_output(csv, out_path, out);
        return kExitOk;
    }
    write_output(report_to_json(r).dump(2) + "\n", out_path, out);
    return kExitOk;
}

// ---------------------------------------------------------------------------
// simulate

int cmd_simulate(const CommonParams& p, const std::string& attack, std::size_t n,
                 std::uint64_t seed, unsigned threads, const std::string& format,
                 const std::string& out_path, std::ostream& out) {
    require_format(format, {"json"});
    RunConfig cfg;
    cfg.prep.v = p.v;
    cfg.prep.mode = PreparationMode::joint;
    cfg.prep.mu = p.mu.value_or(1.0);
    cfg.prep.n0 = p.n0;
    cfg.channel = ChannelModel::from_gain_excess(p.gain(), p.eps);
    if (attack == "cloner") {
        cfg.attack = AttackKind::entangling_cloner;
    } else if (attack != "none") {
        throw CLI::ValidationError("--attack", "expected none|cloner");
    }
    cfg.n = n;
    cfg.seed = seed;
    cfg.threads = threads;

    RunResult res = run(cfg);
    AnalyticTargets t = analytic_targets(cfg);

    ordered_json j;
    j["schema"] = "cvqkd.run.v1";
    j["config"] = {{"g", cfg.channel.g_q}, {"eps", cfg.channel.eps_q()},
                   {"chi", cfg.channel.chi_q}, {"v", p.v},
                   {"mu", cfg.prep.mu},     {"attack", attack},
                   {"n", n},                {"seed", seed},
                   {"n0", p.n0}};
    auto estimate_json = [](const Estimate& e, double analytic) {
        return ordered_json{{"analytic", analytic},
                            {"empirical", e.value},
                            {"stderr", e.stderr_est},
                            {"z", e.z_against(analytic)}};
    };
    j["v_ba"] = estimate_json(res.v_ba_hat, t.v_ba);
    j["i_ba"] = estimate_json(res.i_ba_hat, t.i_ba);
    if (res.v_be_hat) j["v_be"] = estimate_json(*res.v_be_hat, t.v_be);
    if (res.i_be_hat) j["i_be"] = estimate_json(*res.i_be_hat, t.i_be);
    j["empirical_cov"]["labels"] = res.empirical.labels();
    auto& rows = j["empirical_cov"]["matrix"];
    for (Eigen::Index r = 0; r < res.empirical.size(); ++r) {
        ordered_json row = ordered_json::array();
        for (Eigen::Index c = 0; c < res.empirical.size(); ++c)
            row.push_back(res.empirical.cov()(r, c));
        rows.push_back(row);
    }
    write_output(j.dump(2) + "\n", out_path, out);
    return kExitOk;
}

// ---------------------------------------------------------------------------
// verify

int cmd_verify(const std::vector<double>& gs, const std::vector<double>& epss,
               const std::vector<double>& vs, double mu, std::size_t n, std::uint64_t seed,
               unsigned threads, double bias, const std::string& format,
               const std::string& out_path, std::ostream& out) {
    require_format(format, {"csv", "json"});
    SweepGrid grid;
    if (!gs.empty()) grid.g_values = gs;
    if (!epss.empty()) grid.eps_values = epss;
    if (!vs.empty()) grid.v_values = vs;
    grid.mu = mu;
    grid.n = n;
    grid.seed = seed;
    grid.threads = threads;

    std::vector<SweepRow> rows = sweep(grid);

    bool all_pass = true;
    for (auto& row : rows) {
        if (!row.analytic) continue;
        // A nonzero bias is the negative-control path: shift the analytic
        // target and recompute the gate.
        *row.analytic += bias;
        row.z = (*row.empirical - *row.analytic) / *row.stderr_est;
        row.pass = std::abs(*row.z) <= grid.z_gate;
        all_pass = all_pass && row.pass;
    }

    if (format == "json") {
        ordered_json j;
        j["schema"] = "cvqkd.verify.v1";
        auto& jrows = j["rows"];
        jrows = ordered_json::array();
        for (const auto& row : rows) {
            ordered_json jr;
            jr["g"] = row.g;
            jr["eps"] = row.eps;
            jr["v"] = row.v;
            jr["mu"] = row.mu;
            jr["attack"] = row.attack;
            jr["n"] = row.n;
            jr["seed"] = row.seed;
            jr["quantity"] = row.quantity;
            jr["analytic"] = row.analytic ? ordered_json(*row.analytic) : ordered_json(nullptr);
            jr["empirical"] = row.empirical ? ordered_json(*row.empirical) : ordered_json(nullptr);
            jr["stderr"] = row.stderr_est ? ordered_json(*row.stderr_est) : ordered_json(nullptr);
            jr["z"] = row.z ? ordered_json(*row.z) : ordered_json(nullptr);
            jr["pass"] = row.pass;
            jrows.push_back(jr);
        }
        j["all_pass"] = all_pass;
        write_output(j.dump(2) + "\n", out_path, out);
        return all_pass ? kExitOk : kExitStatisticalFailure;
    }

    std::string csv = "# cvqkd.verify.v1\n";
    csv += "g,eps,v,mu,attack,n,seed,quantity,analytic,empirical,stderr,z,pass\n";
    for (const auto& row : rows) {
        csv += fmt(row.g) + "," + fmt(row.eps) + "," + fmt(row.v) + "," + fmt(row.mu) + "," +
               row.attack + "," + std::to_string(row.n) + "," + std::to_string(row.seed) + "," +
               row.quantity + ",";
        csv += (row.analytic ? fmt(*row.analytic) : "") + ",";
        csv += (row.empirical ? fmt(*row.empirical) : "") + ",";
        csv += (row.stderr_est ? fmt(*row.stderr_est) : "") + ",";
        csv += (row.z ? fmt(*row.z) : "") + ",";
        csv += row.pass ? "1" : "0";
        csv += "\n";
    }
    write_output(csv, out_path, out);
    return all_pass ? kExitOk : kExitStatisticalFailure;
}

// ---------------------------------------------------------------------------
// distill

int cmd_distill(const CommonParams& p, const std::string& direction, int m, int rounds,
                std::size_t margin, double sacrifice, std::size_t n, std::uint64_t seed,
                unsigned threads, const std::string& format, const std::string& out_prefix,
                const std::string& log_path, std::ostream& out, std::ostream& err) {
    require_format(format, {"json"});
    RunConfig cfg;
    cfg.prep.v = p.v;
    cfg.prep.n0 = p.n0;
    cfg.channel = ChannelModel::from_gain_excess(p.gain(), p.eps);
    cfg.n = n;
    cfg.seed = seed;
    cfg.threads = threads;

    const ProtocolMode pm = parse_mode(p.mode);
    std::vector<double> alice, bob;
    double s_used = 1.0;
    if (pm == ProtocolMode::epr) {
        cfg.prep.mode = PreparationMode::single_quadrature;
        cfg.bob_basis_policy = BobBasisPolicy::random;
        RunResult res = run(cfg);
        SiftingResult sift = sifting(res);
        alice = std::move(sift.retained_alice);
        bob = std::move(sift.retained_bob);
        s_used = 1.0 / p.v;
    } else {
        cfg.prep.mode = PreparationMode::joint;
        s_used = p.squeezing();
        // mu realizing the requested squeezing: s = (mu V + 1)/(V + mu).
        const double mu = (s_used * p.v - 1.0) / (p.v - s_used + 1e-300);
        cfg.prep.mu = std::max(mu, 1e-9);
        RunResult res = run(cfg);
        const Eigen::VectorXd a = res.samples.col("Q_A");
        const Eigen::VectorXd b = res.samples.col("Q_B");
        alice.assign(a.data(), a.data() + a.size());
        bob.assign(b.data(), b.data() + b.size());
    }

    DistillConfig dcfg;
    dcfg.direction = direction == "dr" ? Direction::dr : Direction::rr;
    dcfg.m = m;
    dcfg.rounds = rounds;
    dcfg.margin_bits = margin;
    dcfg.sacrificed_fraction = sacrifice;
    dcfg.seed = derive_stream(seed, 0xD157ULL);
    dcfg.v = p.v;
    dcfg.s = s_used;
    dcfg.n0 = p.n0;
    dcfg.keep_log = !log_path.empty();

    KeySession session = distill(alice, bob, dcfg);

    ordered_json j;
    j["schema"] = "cvqkd.session.v1";
    j["config"] = {{"direction", to_string(dcfg.direction)},
                   {"mode", p.mode},
                   {"g", cfg.channel.g_q},
                   {"eps", cfg.channel.eps_q()},
                   {"v", p.v},
                   {"s", s_used},
                   {"m", m},
                   {"rounds", rounds},
                   {"margin_bits", margin},
                   {"sacrificed_fraction", sacrifice},
                   {"n", n},
                   {"seed", seed},
                   {"n0", p.n0}};
    j["status"] = to_string(session.status);
    j["symbols_used"] = session.alice_values.size();
    j["estimate"] = {{"g_hat", session.estimate.g_hat},
                     {"g_se", session.estimate.g_se},
                     {"chi_hat", session.estimate.chi_hat},
                     {"chi_se", session.estimate.chi_se},
                     {"low_precision", session.estimate.low_precision}};
    j["i_ba"] = session.i_ba;
    j["i_be"] = session.i_be;
    j["delta_i"] = session.delta_i;
    j["disclosed_bits"] = session.disclosed_bits;
    j["corrector_flow_bits"] = session.corrector_flow_bits;
    j["beta_achieved"] = session.beta_achieved;
    j["key_length"] = session.key_length;
    j["keys_match"] = !session.final_key_a.empty() &&
                      session.final_key_a == session.final_key_b;

    const std::string prefix = out_prefix.empty() ? "distill" : out_prefix;
    if (session.status == SessionStatus::success) {
        std::ofstream fa(prefix + ".alice.key"), fb(prefix + ".bob.key");
        if (!fa || !fb) throw std::runtime_error("cannot write key files under prefix " + prefix);
        fa << bits_to_hex(session.final_key_a) << "\n";
        fb << bits_to_hex(session.final_key_b) << "\n";
    }
    if (!log_path.empty()) {
        std::ofstream fl(log_path, std::ios::binary);
        if (!fl) throw std::runtime_error("cannot write message log: " + log_path);
        fl << message_log_to_jsonl(session.message_log);
    }
    {
        std::ofstream fj(prefix + ".session.json", std::ios::binary);
        if (!fj) throw std::runtime_error("cannot write session report under prefix " + prefix);
        fj << j.dump(2) << "\n";
    }
    out << j.dump(2) << "\n";
    if (session.status != SessionStatus::success) {
        err << "aborted: " << to_string(session.status) << "\n";
        return kExitSecurityAbort;
    }
    return kExitOk;
}

} // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    CLI::App app{"continuous-variable QKD security calculus and key distillation"};
    app.require_subcommand(1);

    // --- security-curve ------------------------------------------------
    auto* curve = app.add_subcommand("security-curve", "tolerable excess noise vs losses (CSV)");
    double db_min = 0.0, db_max = 40.0;
    int points = 81;
    double curve_v = 1e6;
    std::vector<std::string> curves;
    bool clip_dr = false;
    std::string curve_out, curve_format = "csv";
    curve->add_option("--loss-db-min", db_min, "start of the loss range (dB)");
    curve->add_option("--loss-db-max", db_max, "end of the loss range (dB)");
    curve->add_option("--points", points, "number of grid points");
    curve->add_option("--v", curve_v, "modulation variance (default 1e6, the V->inf curves)");
    curve->add_option("--curves", curves,
                      "subset of dr,rr_coh,rr_epr,entanglement (default: all)")
        ->delimiter(',');
    curve->add_flag("--clip-dr", clip_dr, "clip the DR threshold at zero for display");
    curve->add_option("--format", curve_format, "csv|json (default csv)");
    curve->add_option("--out", curve_out, "output file (default stdout)");

    // --- keyrate --------------------------------------------------------
    auto* keyrate = app.add_subcommand("keyrate", "secret-rate report for one channel (JSON)");
    CommonParams kp;
    kp.add_channel_flags(keyrate);
    kp.add_protocol_flags(keyrate);
    std::optional<double> beta;
    std::string keyrate_out, keyrate_format = "json";
    keyrate->add_option("--beta", beta, "reconciliation efficiency in [0,1]");
    keyrate->add_option("--format", keyrate_format, "json|csv (default json)");
    keyrate->add_option("--out", keyrate_out, "output file (default stdout)");

    // --- simulate ---------------------------------------------------------
    auto* simulate = app.add_subcommand("simulate", "seeded Monte Carlo run vs analytics (JSON)");
    CommonParams sp;
    sp.add_channel_flags(simulate);
    simulate->add_option("--mu", sp.mu, "joint-measurement asymmetry (default 1)");
    std::string attack = "none";
    std::size_t sim_n = 100000;
    std::uint64_t sim_seed = 1;
    unsigned sim_threads = 1;
    std::string sim_out, sim_format = "json";
    simulate->add_option("--attack", attack, "none|cloner");
    simulate->add_option("--n", sim_n, "symbol count");
    simulate->add_option("--seed", sim_seed, "RNG seed");
    simulate->add_option("--threads", sim_threads, "worker threads");
    simulate->add_option("--format", sim_format, "json");
    simulate->add_option("--out", sim_out, "output file (default stdout)");

    // --- verify -----------------------------------------------------------
    auto* verify = app.add_subcommand("verify", "z-score sweep of analytics vs Monte Carlo (CSV)");
    std::vector<double> ver_g, ver_eps, ver_v;
    double ver_mu = 1.0;
    std::size_t ver_n = 1000000;
    std::uint64_t ver_seed = 20240901;
    unsigned ver_threads = 1;
    double ver_bias = 0.0;
    std::string ver_out, ver_format = "csv";
    verify->add_option("--g-list", ver_g, "gains (default 0.9,0.5,0.1)")->delimiter(',');
    verify->add_option("--eps-list", ver_eps, "excess noises (default 0,0.2)")->delimiter(',');
    verify->add_option("--v-list", ver_v, "modulation variances (default 4,10)")->delimiter(',');
    verify->add_option("--mu", ver_mu, "joint-measurement asymmetry");
    verify->add_option("--n", ver_n, "samples per grid point");
    verify->add_option("--seed", ver_seed, "RNG seed");
    verify->add_option("--threads", ver_threads, "worker threads");
    verify->add_option("--bias", ver_bias,
                       "shift analytic targets by this amount (negative control)");
    verify->add_option("--format", ver_format, "csv|json (default csv)");
    verify->add_option("--out", ver_out, "output file (default stdout)");

    // --- distill ----------------------------------------------------------
    auto* distill_cmd = app.add_subcommand("distill", "end-to-end key distillation session");
    CommonParams dp;
    dp.add_channel_flags(distill_cmd);
    dp.add_protocol_flags(distill_cmd);
    std::string direction = "rr";
    int m = 4, rounds = 8;
    std::size_t margin = 64;
    double sacrifice = 0.1;
    std::size_t dis_n = 20000;
    std::uint64_t dis_seed = 1;
    unsigned dis_threads = 1;
    std::string out_prefix = "distill", log_path, dis_format = "json";
    distill_cmd->add_option("--direction", direction, "rr|dr")
        ->check(CLI::IsMember({"rr", "dr"}));
    distill_cmd->add_option("--format", dis_format, "json");
    distill_cmd->add_option("--m", m, "slices per symbol")->check(CLI::Range(1, 8));
    distill_cmd->add_option("--rounds", rounds, "correction passes per bit plane");
    distill_cmd->add_option("--margin", margin, "privacy-amplification safety margin (bits)");
    distill_cmd->add_option("--sacrifice", sacrifice, "fraction of symbols revealed for estimation");
    distill_cmd->add_option("--n", dis_n, "symbol count");
    distill_cmd->add_option("--seed", dis_seed, "RNG seed");
    distill_cmd->add_option("--threads", dis_threads, "worker threads");
    distill_cmd->add_option("--out", out_prefix, "output file prefix (default 'distill')");
    distill_cmd->add_option("--log-messages", log_path, "write the reconciliation message log (JSONL)");

    std::vector<std::string> argv_rev(args.rbegin(), args.rend());
    try {
        app.parse(argv_rev);
    } catch (const CLI::ParseError& e) {
        if (e.get_exit_code() == 0) {
            out << app.help();
            return kExitOk;
        }
        err << e.what() << "\n";
        return kExitValidation;
    }

    try {
        if (curve->parsed())
            return cmd_security_curve(db_min, db_max, points, curve_v, curves, clip_dr,
                                      curve_format, curve_out, out);
        if (keyrate->parsed()) return cmd_keyrate(kp, beta, keyrate_format, keyrate_out, out);
        if (simulate->parsed())
            return cmd_simulate(sp, attack, sim_n, sim_seed, sim_threads, sim_format, sim_out,
                                out);
        if (verify->parsed())
            return cmd_verify(ver_g, ver_eps, ver_v, ver_mu, ver_n, ver_seed, ver_threads,
                              ver_bias, ver_format, ver_out, out);
        if (distill_cmd->parsed())
            return cmd_distill(dp, direction, m, rounds, margin, sacrifice, dis_n, dis_seed,
                               dis_threads, dis_format, out_prefix, log_path, out, err);
    } catch (const CLI::ValidationError& e) {
        err << e.what() << "\n";
        return kExitValidation;
    } catch (const std::invalid_argument& e) {
        err << "invalid argument: " << e.what() << "\n";
        return kExitValidation;
    } catch (const std::domain_error& e) {
        err << "invalid parameter: " << e.what() << "\n";
        return kExitValidation;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << "\n";
        return kExitValidation;
    }
    err << "no subcommand given\n";
    return kExitValidation;
}

} // namespace cvqkd
