#include <gtest/gtest.h>

#include <sstream>

#include "btp/errors.hpp"
#include "btp/io.hpp"
#include "oracle_values.hpp"

using namespace btp;

TEST(Config, LosslessRoundTrip) {
    ExperimentConfig c;
    c.command = "holder";
    c.d = 2;
    c.delta = 0.1;  // not exactly representable
    c.l = 1.0 / 3.0;
    c.boundary = "periodic";
    c.horizon = 0.3;
    c.level = 11;
    c.quadrature.rel_tol = 1e-9;
    c.quadrature.node_count = 24;
    c.diffusion = "bounded-sine";
    c.diffusion_param = 0.7;
    c.initial = "gaussian";
    c.initial_width = 0.05;
    c.seed = 0xFFFFFFFFFFFFFFFFull;
    c.replicates = 77;
    c.out = "some/dir";
    c.levels = {8, 10};
    c.kernel_times = {0.1, 1e-7};
    c.checks = {"l2", "dde"};
    c.q = 2.0;
    const ExperimentConfig back = parse_config(canonical_json(c));
    EXPECT_EQ(back, c);
    EXPECT_EQ(canonical_json(back), canonical_json(c));
}

TEST(Config, PartialDocumentsUseDefaults) {
    const auto c = parse_config(R"({"d": 3, "lattice": {"delta": 0.5}})");
    EXPECT_EQ(c.d, 3);
    EXPECT_EQ(c.delta, 0.5);
    EXPECT_EQ(c.l, ExperimentConfig{}.l);
    EXPECT_EQ(c.quadrature, QuadratureSpec{});
}

TEST(Config, Errors) {
    EXPECT_THROW(parse_config("{"), ConfigError);
    EXPECT_THROW(parse_config(R"({"dimension": 2})"), ConfigError);
    EXPECT_THROW(parse_config(R"({"lattice": {"spacing": 2}})"), ConfigError);
    EXPECT_THROW(parse_config(R"({"d": "two"})"), ConfigError);
    ExperimentConfig c;
    c.boundary = "reflecting";
    EXPECT_THROW(c.lattice(), ConfigError);
    c = {};
    c.initial = "triangle";
    EXPECT_THROW(c.initial_condition(), ConfigError);
}

TEST(Config, InitialConditions) {
    ExperimentConfig c;
    c.delta = 0.5;
    c.l = 1.0;
    c.initial = "indicator";
    c.initial_value = 2.0;
    const auto f = c.initial_condition().on(c.lattice());
    EXPECT_EQ(f.values, (std::vector<double>{0, 0, 2, 0, 0}));
    c.initial = "gaussian";
    c.initial_width = 1.0;
    EXPECT_NEAR(c.initial_condition().on(c.lattice()).values[4], 2.0 * std::exp(-0.5), 1e-15);
}

TEST(Sha256, KnownVectors) {
    EXPECT_EQ(sha256_hex(""), "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855");
    EXPECT_EQ(sha256_hex("abc"), "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
}

TEST(Csv, KernelTableHeaderAndMassRow) {
    auto mass_of = [](double delta, long radius, std::string* text = nullptr) {
        std::ostringstream os;
        os << std::setprecision(17);
        write_kernel_table_csv(os, build_kernel_table("btbm", {1.0}, delta, 1, radius));
        const std::string s = os.str();
        if (text) *text = s;
        const auto pos = s.find("btbm-mass,");
        return pos == std::string::npos ? 0.0 : std::stod(s.substr(pos + 10));
    };
    std::string s;
    const double coarse = mass_of(0.25, 40, &s);
    EXPECT_EQ(s.substr(0, s.find('\n')), "t,x1,kind,value");
    EXPECT_NE(s.find("1,0,btbm,0.686212627559"), std::string::npos);
    // the mass row is a Riemann sum of the density: error O(delta^2)
    const double fine = mass_of(0.05, 200);
    EXPECT_LT(std::abs(coarse - 1.0), 1e-2);
    EXPECT_NEAR(std::abs(coarse - 1.0) / std::abs(fine - 1.0), 25.0, 2.5);
}

TEST(Csv, SolutionRows) {
    SolutionField f{make_lattice(0.5, 2, 0.5), {0.0, 0.5}, std::vector<double>(18, 1.5), std::vector<double>(18, 1.0), 3, 0, {}};
    std::ostringstream os;
    write_solution_header(os, 2);
    write_solution_rows(os, f);
    std::istringstream in(os.str());
    std::string line;
    std::getline(in, line);
    EXPECT_EQ(line, "t,x1,x2,value,det_value,replicate");
    std::getline(in, line);
    EXPECT_EQ(line, "0,-0.5,-0.5,1.5,1,3");
    std::size_t rows = 1;
    while (std::getline(in, line)) ++rows;
    EXPECT_EQ(rows, 18u);
}

TEST(Json, ReportCarriesVerdict) {
    EstimateReport r;
    r.quantity = "q";
    r.values = {1.0};
    r.criterion = Criterion::below;
    r.reference = 2.0;
    const auto j = report_json(r);
    EXPECT_EQ(j["pass"], true);
    EXPECT_EQ(j["criterion"], "below");
    HolderReport h;
    h.holder_reference = 0.25;
    h.moment_reference = 0.5;
    h.fit.slope = 0.52;
    h.fit.slope_stderr = 0.01;
    const auto hj = holder_json(h, 0.08);
    EXPECT_EQ(hj["reference_exponent"], 0.25);
    EXPECT_EQ(hj["pass"], true);
}

TEST(Manifest, Fields) {
    RunManifest m;
    m.config_hash = "abc";
    m.outputs.emplace_back("a.csv", "00");
    const auto j = manifest_json(m);
    EXPECT_EQ(j["outputs"][0]["file"], "a.csv");
    EXPECT_EQ(j["tool_version"], kToolVersion);
}
