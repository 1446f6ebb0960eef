#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <limits>
#include <random>
#include <sstream>
#include <string>

#include <gtest/gtest.h>
#include <unistd.h>

#include "svymc/io.hpp"
#include "svymc/simulator.hpp"

using namespace svymc;
namespace fs = std::filesystem;

namespace {

class TempDir {
public:
    TempDir()
    {
        static int counter = 0;
        path_ = fs::temp_directory_path() /
                ("svymc_io_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
        fs::create_directories(path_);
    }
    ~TempDir() { fs::remove_all(path_); }
    std::string file(const std::string& name) const { return (path_ / name).string(); }

private:
    fs::path path_;
};

void write_text(const std::string& path, const std::string& text)
{
    std::ofstream(path) << text;
}

std::string read_text(const std::string& path)
{
    std::ifstream in(path);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

const char* kSchema = R"({
  "na": "NA",
  "columns": [
    {"name": "age", "role": "covariate"},
    {"name": "income", "role": "covariate"},
    {"name": "q1", "role": "response", "family": "gaussian"},
    {"name": "q2", "role": "response", "family": "gaussian"},
    {"name": "visits", "role": "response", "family": "poisson"},
    {"name": "smoker", "role": "response", "family": "bernoulli"},
    {"name": "region", "role": "stratum"},
    {"name": "p", "role": "weight"}
  ]
})";

const char* kData =
    "# source=unit test\n"
    "region,age,income,q1,q2,visits,smoker,p\n"
    "south,30,1.5,0.2,NA,3,1,0.1\n"
    "north,41,2.5,NA,1.1,0,0,0.2\n"
    "\"south\",52,3.5,1.2,0.4,NA,1,0.1\r\n"
    "north,63,4.5,-0.3,0.9,5,NA,0.2\n";

int run_cli(const std::string& args, const std::string& log)
{
    const std::string cmd = std::string(SVYMC_CLI_PATH) + " " + args + " > " + log + " 2>&1";
    const int status = std::system(cmd.c_str());
    return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

}  // namespace

TEST(Numbers, RoundTripExactly)
{
    std::mt19937_64 rng(1);
    std::uniform_real_distribution<double> u(-1e6, 1e6);
    for (int k = 0; k < 1000; ++k) {
        const double v = u(rng) * std::pow(10.0, (k % 40) - 20);
        EXPECT_EQ(parse_double(format_double(v)).value(), v);
    }
    for (double v : {0.0, -0.0, 1e-310, 1.7976931348623157e308, 0.1}) EXPECT_EQ(parse_double(format_double(v)).value(), v);
    EXPECT_FALSE(parse_double("1.0x").has_value());
    EXPECT_FALSE(parse_double("").has_value());
    EXPECT_EQ(parse_double(" 2.5 ").value(), 2.5);
}

TEST(Csv, HandlesQuotesCommentsAndRaggedRows)
{
    TempDir dir;
    write_text(dir.file("a.csv"), "# k=v\na,b\n\"x,y\",\"he said \"\"hi\"\"\"\n\n1,2\r\n");
    const CsvTable t = read_csv(dir.file("a.csv"));
    ASSERT_EQ(t.rows.size(), 2u);
    EXPECT_EQ(t.rows[0][0], "x,y");
    EXPECT_EQ(t.rows[0][1], "he said \"hi\"");
    EXPECT_EQ(t.rows[1][1], "2");
    ASSERT_EQ(t.provenance.size(), 1u);
    EXPECT_EQ(t.provenance[0].second, "v");
    write_text(dir.file("b.csv"), "a,b\n1\n");
    EXPECT_THROW(read_csv(dir.file("b.csv")), SchemaViolation);
    EXPECT_THROW(read_csv(dir.file("missing.csv")), IoError);
}

TEST(LoadDataset, FollowsSchema)
{
    TempDir dir;
    write_text(dir.file("s.json"), kSchema);
    write_text(dir.file("d.csv"), kData);
    const MixedDataset d = load_dataset(dir.file("d.csv"), dir.file("s.json"));
    EXPECT_EQ(d.rows(), 4);
    EXPECT_EQ(d.columns(), 4);
    EXPECT_EQ(d.layout, parse_layout("gaussian:2,poisson:1,bernoulli:1"));
    EXPECT_EQ(d.covariate_names, (std::vector<std::string>{"age", "income"}));
    EXPECT_EQ(d.stratum_labels, (std::vector<std::string>{"south", "north"}));
    EXPECT_EQ(d.strata, (std::vector<std::size_t>{0, 1, 0, 1}));
    EXPECT_TRUE(is_na(d.y(0, 1)));
    EXPECT_EQ(d.r(0, 1), 0.0);
    EXPECT_EQ(d.y(3, 2), 5.0);
    EXPECT_EQ(d.pi(1), 0.2);
    EXPECT_EQ(d.x(2, 0), 52.0);
    EXPECT_NEAR(d.effective_population_size(), 2 / 0.1 + 2 / 0.2, 1e-12);
}

TEST(LoadDataset, StandardizesAndKeepsTransforms)
{
    TempDir dir;
    std::string schema = kSchema;
    schema.replace(schema.find("\"na\""), 4, "\"standardize\": true, \"na\"");
    write_text(dir.file("s.json"), schema);
    write_text(dir.file("d.csv"), kData);
    const MixedDataset d = load_dataset(dir.file("d.csv"), dir.file("s.json"));
    EXPECT_NEAR(d.x.col(0).mean(), 0.0, 1e-12);
    EXPECT_NEAR(d.covariate_transforms[0].center, 46.5, 1e-12);
    EXPECT_NEAR(d.covariate_transforms[0].inverse(d.x(3, 0)), 63.0, 1e-12);
    EXPECT_NEAR(d.response_transforms[0].inverse(d.y(2, 0)), 1.2, 1e-12);
    EXPECT_TRUE(d.response_transforms[2].is_identity());  // poisson counts stay as they are

    // Saving keeps the transform, so a reload neither re-standardizes nor loses it.
    save_dataset(d, dir.file("d2.csv"), dir.file("s2.json"));
    const MixedDataset e = load_dataset(dir.file("d2.csv"), dir.file("s2.json"));
    EXPECT_EQ(e.x, d.x);
    EXPECT_EQ(e.covariate_transforms[0].center, d.covariate_transforms[0].center);
}

TEST(LoadDataset, ReportsSchemaViolations)
{
    TempDir dir;
    write_text(dir.file("d.csv"), kData);
    const auto load_with = [&](const std::string& schema) {
        write_text(dir.file("s.json"), schema);
        return load_dataset(dir.file("d.csv"), dir.file("s.json"));
    };
    std::string missing = kSchema;
    missing.replace(missing.find("\"income\""), 8, "\"wealth\"");
    EXPECT_THROW(load_with(missing), SchemaViolation);
    std::string split = kSchema;
    split.replace(split.find("\"q2\", \"role\": \"response\", \"family\": \"gaussian\""), 47,
                  "\"q2\", \"role\": \"response\", \"family\": \"bernoulli\"");
    EXPECT_THROW(load_with(split), SchemaViolation);  // bernoulli block split by poisson
    std::string no_weight = kSchema;
    no_weight.replace(no_weight.find("\"weight\""), 8, "\"covariate\"");
    EXPECT_THROW(load_with(no_weight), SchemaViolation);
    EXPECT_THROW(load_with("{ not json"), SchemaViolation);
    std::string family = kSchema;
    family.replace(family.find("\"poisson\""), 9, "\"gamma\"");
    EXPECT_THROW(load_with(family), SchemaViolation);

    write_text(dir.file("s.json"), kSchema);
    std::string bad_pi = kData;
    bad_pi.replace(bad_pi.find(",0.2\n"), 5, ",0\n");
    write_text(dir.file("d.csv"), bad_pi);
    EXPECT_THROW(load_dataset(dir.file("d.csv"), dir.file("s.json")), WeightError);
    std::string bad_cov = kData;
    bad_cov.replace(bad_cov.find("41"), 2, "NA");
    write_text(dir.file("d.csv"), bad_cov);
    EXPECT_THROW(load_dataset(dir.file("d.csv"), dir.file("s.json")), SchemaViolation);
}

TEST(SaveDataset, RoundTripsSimulatedData)
{
    TempDir dir;
    PopulationSpec spec;
    spec.strata = 2;
    spec.m1 = 2;
    spec.m2 = 5;
    spec.layout = parse_layout("gaussian:3,poisson:2,bernoulli:2");
    const auto [truth, sample] = simulate(spec, 4);
    save_dataset(sample.dataset, dir.file("d.csv"), dir.file("s.json"));
    const MixedDataset d = load_dataset(dir.file("d.csv"), dir.file("s.json"));
    const MixedDataset& o = sample.dataset;
    EXPECT_EQ(d.x, o.x);
    EXPECT_EQ(d.r, o.r);
    EXPECT_EQ(d.zero_filled(), o.zero_filled());
    EXPECT_EQ(d.pi, o.pi);
    EXPECT_EQ(d.strata, o.strata);
    EXPECT_EQ(d.layout, o.layout);
    EXPECT_EQ(d.population_size, o.population_size);
}

TEST(MatrixCsv, RoundTripsWithMissingMarkers)
{
    TempDir dir;
    Matrix m(2, 3);
    m << 1.0 / 3.0, kNA, -2e-300, 4, 5.5, 1e300;
    write_matrix_csv(dir.file("m.csv"), m, {"a", "b", "c"}, {{"note", "x"}});
    const Matrix back = read_matrix_csv(dir.file("m.csv"));
    EXPECT_EQ(back(0, 0), m(0, 0));
    EXPECT_TRUE(is_na(back(0, 1)));
    EXPECT_EQ(back(1, 2), 1e300);
    EXPECT_THROW(write_matrix_csv(dir.file("m.csv"), m, {"a"}), ShapeError);
}

class CliTest : public ::testing::Test {
protected:
    TempDir dir;
    std::string log() const { return dir.file("log.txt"); }
    std::string simulate_args(const std::string& out) const
    {
        return "simulate --strata 2 --m1 3 --m2 10 --layout gaussian:3,poisson:3,bernoulli:3 --seed 3 --out-dir " +
               out;
    }
};

TEST_F(CliTest, SimulateFitImputeTunePipeline)
{
    const std::string sim = dir.file("sim");
    ASSERT_EQ(run_cli(simulate_args(sim), log()), 0) << read_text(log());
    for (const char* f : {"data.csv", "schema.json", "true_z.csv", "true_p.csv"}) {
        EXPECT_TRUE(fs::exists(sim + "/" + f)) << f;
    }
    const std::string io = "--data " + sim + "/data.csv --schema " + sim + "/schema.json";
    ASSERT_EQ(run_cli("fit " + io + " --tau 0.001 --iterations 20 --out-dir " + dir.file("fit"), log()), 0)
        << read_text(log());
    const Matrix z = read_matrix_csv(dir.file("fit/z_hat.csv"));
    EXPECT_EQ(z.rows(), 60);
    EXPECT_EQ(z.cols(), 9);
    const CsvTable trace = read_csv(dir.file("fit/trace.csv"));
    EXPECT_EQ(trace.header, (std::vector<std::string>{"k", "objective", "accepted_flag"}));
    EXPECT_EQ(trace.rows.size(), 21u);

    ASSERT_EQ(run_cli("impute " + io + " --z-hat " + dir.file("fit/z_hat.csv") + " --output " + dir.file("imp.csv"),
                      log()),
              0)
        << read_text(log());
    const Matrix filled = read_matrix_csv(dir.file("imp.csv"));
    EXPECT_TRUE(filled.allFinite());

    ASSERT_EQ(run_cli("tune " + io + " --grid 2^-10..2^-8 --folds 3 --iterations 10 --output " + dir.file("t.csv"),
                      log()),
              0)
        << read_text(log());
    EXPECT_EQ(read_csv(dir.file("t.csv")).rows.size(), 3u);
}

TEST_F(CliTest, ConfigFileIsOverriddenByFlags)
{
    const std::string sim = dir.file("sim");
    ASSERT_EQ(run_cli(simulate_args(sim), log()), 0);
    write_text(dir.file("cfg.json"), R"({"tau": 0.5, "iterations": 7, "early-stop": false})");
    const std::string io = "--data " + sim + "/data.csv --schema " + sim + "/schema.json";
    ASSERT_EQ(run_cli("fit --config " + dir.file("cfg.json") + " " + io + " --iterations 4 --out-dir " +
                          dir.file("fit"),
                      log()),
              0)
        << read_text(log());
    EXPECT_EQ(read_csv(dir.file("fit/trace.csv")).rows.size(), 5u);
    EXPECT_NE(read_text(dir.file("fit/trace.csv")).find("# tau=0.5"), std::string::npos);
}

TEST_F(CliTest, ExitCodes)
{
    EXPECT_EQ(run_cli("fit --data x.csv", log()), 2);
    EXPECT_EQ(run_cli("nonsense", log()), 2);
    EXPECT_EQ(run_cli("--help", log()), 0);
    EXPECT_EQ(run_cli("fit --data " + dir.file("none.csv") + " --schema " + dir.file("none.json") + " --out-dir " +
                          dir.file("o"),
                      log()),
              3);
    const std::string sim = dir.file("sim");
    ASSERT_EQ(run_cli(simulate_args(sim), log()), 0);
    EXPECT_EQ(run_cli("fit --data " + sim + "/data.csv --schema " + sim + "/schema.json --tau -1 --out-dir " +
                          dir.file("o"),
                      log()),
              3);
}

TEST_F(CliTest, RepeatedRunsAreByteIdentical)
{
    ASSERT_EQ(run_cli(simulate_args(dir.file("a")), log()), 0);
    ASSERT_EQ(run_cli(simulate_args(dir.file("b")), log()), 0);
    EXPECT_EQ(read_text(dir.file("a/data.csv")), read_text(dir.file("b/data.csv")));
    const std::string io = "--data " + dir.file("a") + "/data.csv --schema " + dir.file("a") + "/schema.json";
    ASSERT_EQ(run_cli("fit " + io + " --iterations 15 --out-dir " + dir.file("f1"), log()), 0);
    ASSERT_EQ(run_cli("fit " + io + " --iterations 15 --out-dir " + dir.file("f2"), log()), 0);
    EXPECT_EQ(read_text(dir.file("f1/z_hat.csv")), read_text(dir.file("f2/z_hat.csv")));
    EXPECT_EQ(read_text(dir.file("f1/trace.csv")), read_text(dir.file("f2/trace.csv")));
}

TEST_F(CliTest, BenchmarkWritesSummaries)
{
    const std::string args =
        "benchmark --strata 2 --m1 3 --m2 10 --layout gaussian:3,poisson:3 --replicates 2 --iterations 10 "
        "--tau-proposed 0.001 --tau-collective 0.001 --tau-soft-impute 1 --out-dir " +
        dir.file("bm");
    ASSERT_EQ(run_cli(args, log()), 0) << read_text(log());
    const CsvTable s = read_csv(dir.file("bm/summary.csv"));
    EXPECT_EQ(s.header, (std::vector<std::string>{"method", "scenario", "block", "mean_RE", "se_RE", "n_replicates",
                                                  "n_failures"}));
    EXPECT_EQ(s.rows.size(), 4u * 4u);
    EXPECT_TRUE(fs::exists(dir.file("bm/replicates.csv")));
    EXPECT_EQ(run_cli("benchmark --replicates 2 --out-dir " + dir.file("bm2"), log()), 3);  // no taus
}
