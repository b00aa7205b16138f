#include "sb/io.hpp"

#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <sstream>

namespace {

sb::Matrix random_points(sb::Rng& rng, int n, int d) {
    sb::Matrix m(n, d);
    for (auto& v : m.data) v = rng.normal();
    return m;
}

} // namespace

TEST_CASE("CSV samples round trip exactly") {
    sb::Rng rng(1);
    auto m = random_points(rng, 23, 3);
    std::stringstream buf;
    sb::save_samples_csv(buf, m);
    auto back = sb::load_samples_csv(buf);
    REQUIRE(back.rows == m.rows);
    REQUIRE(back.cols == m.cols);
    REQUIRE(back.data == m.data);  // 17 significant digits round-trip doubles
}

TEST_CASE("malformed CSV is rejected with a line number") {
    std::stringstream buf("x0,x1\n1.0,2.0\n3.0,oops\n");
    try {
        sb::load_samples_csv(buf);
        FAIL("expected a parse error");
    } catch (const std::exception& e) {
        REQUIRE(std::string(e.what()).find("line 3") != std::string::npos);
    }
    std::stringstream buf2("x0,x1\n1.0\n");
    REQUIRE_THROWS(sb::load_samples_csv(buf2));
}

TEST_CASE("binary samples round trip bit-exactly with the fixed header") {
    sb::Rng rng(2);
    auto m = random_points(rng, 17, 2);
    std::stringstream buf;
    sb::save_samples_binary(buf, m);
    std::string bytes = buf.str();
    REQUIRE(bytes.size() == 16 + 17 * 2 * 8);
    REQUIRE(bytes.substr(0, 4) == "SBPT");
    auto back = sb::load_samples_binary(buf);
    REQUIRE(back.rows == 17);
    REQUIRE(back.cols == 2);
    REQUIRE(back.data == m.data);

    std::stringstream bad("NOPE0000000000000000");
    REQUIRE_THROWS(sb::load_samples_binary(bad));
}

TEST_CASE("empty sample sets still produce valid files") {
    sb::Matrix empty(0, 2);
    std::stringstream csv, bin;
    sb::save_samples_csv(csv, empty);
    sb::save_samples_binary(bin, empty);
    REQUIRE(sb::load_samples_csv(csv).rows == 0);
    auto back = sb::load_samples_binary(bin);
    REQUIRE(back.rows == 0);
    REQUIRE(back.cols == 2);
}

TEST_CASE("centering removes the mean and round trips") {
    sb::Rng rng(3);
    auto m = random_points(rng, 100, 2);
    for (int i = 0; i < m.rows; ++i) m.at(i, 0) += 5.0;
    auto centered = sb::center_data(m);
    REQUIRE_THAT(centered.mean[0], Catch::Matchers::WithinAbs(5.0, 0.5));
    double col0 = 0.0;
    for (int i = 0; i < centered.data.rows; ++i) col0 += centered.data.at(i, 0);
    REQUIRE_THAT(col0 / m.rows, Catch::Matchers::WithinAbs(0.0, 1e-12));
    // already-centered data has mean zero again
    auto again = sb::center_data(centered.data);
    for (double v : again.mean) REQUIRE(std::abs(v) < 1e-12);

    sb::uncenter_inplace(centered.data, centered.mean);
    for (std::size_t i = 0; i < m.size(); ++i)
        REQUIRE_THAT(centered.data.data[i], Catch::Matchers::WithinAbs(m.data[i], 1e-12));

    // constant dataset
    sb::Matrix c(4, 1);
    c.data = {2.5, 2.5, 2.5, 2.5};
    auto cc = sb::center_data(c);
    REQUIRE(cc.mean[0] == 2.5);
    for (double v : cc.data.data) REQUIRE(v == 0.0);
}

TEST_CASE("experiment config round trips through its text form") {
    sb::ExperimentConfig cfg;
    cfg.preset = "six-modes";
    cfg.sigma = 1.5;
    cfg.tau = 4.5;
    cfg.seed = 99;
    cfg.out_dir = "results";
    cfg.score.train.iterations = 1234;
    cfg.score.train.lr = 2e-4;
    cfg.score.hidden = {128, 64};
    cfg.score.embed_dim = 32;
    cfg.ratio.train.weight_decay = 0.05;
    cfg.bridge.n1 = 777;
    cfg.bridge.n3 = 3;
    cfg.bridge.final_denoise = true;
    cfg.bridge.sigma = cfg.sigma;
    cfg.bridge.tau = cfg.tau;

    std::stringstream buf;
    sb::serialize_config(buf, cfg);
    auto back = sb::parse_config(buf);
    REQUIRE(back == cfg);
}

TEST_CASE("config parse errors carry line numbers") {
    std::stringstream buf("[experiment]\npreset = six-modes\nbogus_key = 1\n");
    try {
        sb::parse_config(buf);
        FAIL("expected a parse error");
    } catch (const std::exception& e) {
        REQUIRE(std::string(e.what()).find("line 3") != std::string::npos);
    }
    std::stringstream buf2("[experiment\n");
    REQUIRE_THROWS(sb::parse_config(buf2));
    std::stringstream buf3("[bridge]\nn1 = not_a_number\n");
    REQUIRE_THROWS(sb::parse_config(buf3));
}

TEST_CASE("config propagates sigma and tau into the bridge section") {
    std::stringstream buf("[experiment]\nsigma = 2.0\ntau = 8.0\n");
    auto cfg = sb::parse_config(buf);
    REQUIRE(cfg.bridge.sigma == 2.0);
    REQUIRE(cfg.bridge.tau == 8.0);
}

TEST_CASE("KDE integrates to about one and peaks at the modes") {
    auto g = sb::six_modes_mixture();
    sb::Rng rng(5);
    auto samples = sb::gmm_sample(g, 4000, rng);
    sb::GridSpec spec{-8.0, 8.0, -8.0, 8.0, 161, 161};
    auto grid = sb::kde2d(samples, spec);
    REQUIRE(grid.bandwidth_x > 0.0);

    double cell = (16.0 / 160.0) * (16.0 / 160.0);
    double mass = 0.0;
    for (double v : grid.density) {
        REQUIRE(v >= 0.0);
        mass += v * cell;
    }
    REQUIRE_THAT(mass, Catch::Matchers::WithinAbs(1.0, 0.02));

    // locate local argmaxes near each mean
    for (int c = 0; c < 6; ++c) {
        double best = -1.0;
        double bx = 0, by = 0;
        for (int iy = 0; iy < spec.ny; ++iy)
            for (int ix = 0; ix < spec.nx; ++ix) {
                double x = -8.0 + 16.0 * ix / 160.0;
                double y = -8.0 + 16.0 * iy / 160.0;
                double dx = x - g.means[c][0], dy = y - g.means[c][1];
                if (dx * dx + dy * dy <= 1.0) {
                    double v = grid.density[static_cast<std::size_t>(iy) * spec.nx + ix];
                    if (v > best) { best = v; bx = x; by = y; }
                }
            }
        REQUIRE(std::hypot(bx - g.means[c][0], by - g.means[c][1]) <= 0.2);
    }
}

TEST_CASE("KDE rejects degenerate input") {
    sb::Matrix one(1, 2);
    sb::GridSpec spec;
    REQUIRE_THROWS(sb::kde2d(one, spec));
    sb::Matrix wrong(10, 3);
    REQUIRE_THROWS(sb::kde2d(wrong, spec));
}

TEST_CASE("PPM export has the right header and size") {
    sb::KdeGrid grid;
    grid.spec = sb::GridSpec{-1, 1, -1, 1, 4, 3};
    grid.density.assign(12, 0.5);
    grid.density[5] = 2.0;
    std::stringstream buf;
    sb::save_kde_ppm(buf, grid);
    std::string s = buf.str();
    REQUIRE(s.rfind("P6\n4 3\n255\n", 0) == 0);
    REQUIRE(s.size() == std::string("P6\n4 3\n255\n").size() + 4 * 3 * 3);
}

TEST_CASE("field CSV lists x,y,u,v rows") {
    sb::FieldGrid g;
    g.x = {0.0, 1.0};
    g.y = {2.0, 3.0};
    g.u = {-1.0, -2.0};
    g.v = {0.5, 0.25};
    std::stringstream buf;
    sb::save_field_csv(buf, g);
    std::string line;
    std::getline(buf, line);
    REQUIRE(line == "x,y,u,v");
    std::getline(buf, line);
    REQUIRE(line == "0,2,-1,0.5");
}
