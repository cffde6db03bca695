#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

#include <gtest/gtest.h>

#include "shrinkproj/scenario.hpp"

using namespace shrinkproj;

namespace {

ErrorCode code_of(const std::string& text)
{
    try {
        parse_scenario(text);
    } catch (const Error& e) {
        return e.code();
    }
    ADD_FAILURE() << "document was accepted";
    return ErrorCode::InvalidArgument;
}

std::string message_of(const std::string& text)
{
    try {
        parse_scenario(text);
    } catch (const Error& e) {
        return e.what();
    }
    return "";
}

const char* kMinimal = R"({
  "name": "tiny",
  "space": {"dimension": 2, "p": 2},
  "bundle": {"base_set": {"kind": "ball", "radius": 1}, "start": [0.5, 0]},
  "config": {"mode": "hilbert"}
})";

std::filesystem::path scratch_dir(const std::string& leaf)
{
    auto dir = std::filesystem::temp_directory_path() / ("shrinkproj_test_" + leaf);
    std::filesystem::remove_all(dir);
    return dir;
}

std::string slurp(const std::filesystem::path& p)
{
    std::ifstream in(p, std::ios::binary);
    std::ostringstream s;
    s << in.rdbuf();
    return s.str();
}

} // namespace

TEST(Builtins, AllBuildAndRoundTrip)
{
    std::set<std::string> names;
    for (const auto& s : builtin_scenarios()) {
        names.insert(s.name);
        EXPECT_NO_THROW(build_problem(s)) << s.name;
        const Json j = to_json(s);
        EXPECT_EQ(to_json(parse_scenario(j.dump())), j) << s.name;
    }
    EXPECT_EQ(names, (std::set<std::string>{"lp_shift_example", "hilbert_family", "optimization_app"}));
}

TEST(Builtins, LpExampleStartIsSeededAndFeasible)
{
    const auto a = build_problem(lp_shift_example());
    const auto b = build_problem(lp_shift_example());
    EXPECT_EQ(a.bundle.anchor.coords(), b.bundle.anchor.coords());
    EXPECT_LT(norm(a.bundle.anchor), 1.0);
    EXPECT_GT(norm(a.bundle.anchor), 0.0);
    auto other = lp_shift_example();
    other.seed = 8;
    EXPECT_NE(build_problem(other).bundle.anchor.coords(), a.bundle.anchor.coords());
}

TEST(Load, MinimalDocumentUsesDefaults)
{
    const auto s = parse_scenario(kMinimal);
    EXPECT_EQ(s.name, "tiny");
    EXPECT_EQ(s.seed, 7u);
    EXPECT_EQ(s.config.max_outer, 200);
    EXPECT_DOUBLE_EQ(s.config.outer_tol, 1e-6);
    EXPECT_EQ(s.config.mode, Mode::HilbertMain);
    ASSERT_TRUE(s.bundle.start);
    EXPECT_FALSE(s.bundle.reference_solution);
}

TEST(Load, BuiltinNameOrPath)
{
    EXPECT_EQ(load_scenario("hilbert_family").name, "hilbert_family");
    const auto dir = scratch_dir("load");
    std::filesystem::create_directories(dir);
    std::ofstream(dir / "tiny.json") << kMinimal;
    EXPECT_EQ(load_scenario((dir / "tiny.json").string()).name, "tiny");
    try {
        load_scenario((dir / "missing.json").string());
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), ErrorCode::IoError);
    }
}

TEST(Load, ParseErrorsCarryLineAndColumn)
{
    const std::string text = "{\n  \"name\": \"x\",\n  \"space\": {\"dimension\": 2,, \"p\": 2}\n}";
    EXPECT_EQ(code_of(text), ErrorCode::ParseError);
    EXPECT_NE(message_of(text).find("line 3"), std::string::npos) << message_of(text);
    EXPECT_EQ(code_of(""), ErrorCode::ParseError);
}

TEST(Load, ValidationErrorsNameTheField)
{
    struct Case {
        std::string from, to, field;
    };
    const std::vector<Case> cases = {
        {R"("mode": "hilbert")", R"("mode": "hilbert", "colour": 1)", "config.colour"},
        {R"("radius": 1)", R"("radius": -1)", "bundle.base_set.radius"},
        {R"("radius": 1)", R"("radius": "1")", "bundle.base_set.radius"},
        {R"("start": [0.5, 0])", R"("start": [0.5])", "bundle.start"},
        {R"("start": [0.5, 0])", R"("start": [2, 0])", "anchor"},
        {R"("p": 2)", R"("p": 1)", "space.p"},
        {R"("mode": "hilbert")", R"("mode": "hilbert", "max_outer": 2.5)", "config.max_outer"},
        {R"("mode": "hilbert")", R"("mode": "both")", "config.mode"},
        {R"("name": "tiny")", R"("name": "a/b")", "name"},
        {R"("start": [0.5, 0])", R"("start": [0.5, 0], "operators": {"members": [{"map": "shift", "alpha": 0.9}]})",
         "alpha"},
    };
    for (const auto& c : cases) {
        std::string doc = kMinimal;
        const auto at = doc.find(c.from);
        ASSERT_NE(at, std::string::npos) << c.from;
        doc.replace(at, c.from.size(), c.to);
        EXPECT_EQ(code_of(doc), ErrorCode::ValidationError) << c.to;
        EXPECT_NE(message_of(doc).find(c.field), std::string::npos) << message_of(doc);
    }
    std::string missing = kMinimal;
    const std::string space = R"("space": {"dimension": 2, "p": 2},)";
    missing.replace(missing.find(space), space.size(), "");
    EXPECT_NE(message_of(missing).find("space"), std::string::npos);
}

TEST(Load, UnsupportedCombinationsAreRejectedAtLoad)
{
    auto j = to_json(lp_shift_example());
    j["config"]["mode"] = "hilbert";
    EXPECT_EQ(code_of(j.dump()), ErrorCode::UnsupportedCombination);

    auto k = to_json(lp_shift_example());
    k["bundle"]["mixed_term"] = {{"kind", "weighted_l1"}, {"lambda", 0.1}};
    EXPECT_EQ(code_of(k.dump()), ErrorCode::UnsupportedCombination);
}

TEST(Run, ZeroIterationsReturnsTheStart)
{
    auto s = optimization_app();
    s.config.max_outer = 0;
    s.bundle.start = Eigen::Vector3d(1, 2, 3);
    const auto rep = run_scenario(s);
    EXPECT_EQ(rep.outcome, Outcome::IterationCap);
    EXPECT_EQ(rep.x_star, Eigen::Vector3d(1, 2, 3));
    EXPECT_EQ(rep.iterations, 0);
    EXPECT_EQ(iteration_csv(rep), std::string(kCsvHeader) + "\n");
    EXPECT_EQ(exit_code(rep), 3);
}

TEST(Run, OptimizationAppReportAndFiles)
{
    const auto rep = run_scenario(optimization_app());
    EXPECT_EQ(rep.outcome, Outcome::Converged);
    EXPECT_LE((rep.x_star - Eigen::Vector3d(0.7, -1.7, 0.2)).norm(), 1e-4);
    EXPECT_EQ(exit_code(rep), 0);

    std::vector<std::string> names;
    for (const auto& i : rep.invariants) {
        names.push_back(i.name);
        EXPECT_TRUE(i.ok) << i.name;
    }
    EXPECT_EQ(names, invariant_names());

    const auto dir = scratch_dir("emit");
    const auto paths = emit_report(rep, dir / "nested");
    const std::string csv = slurp(paths.csv);
    EXPECT_EQ(csv.find('\r'), std::string::npos);
    std::istringstream lines(csv);
    std::string line;
    std::getline(lines, line);
    EXPECT_EQ(line, kCsvHeader);
    int rows = 0;
    while (std::getline(lines, line)) {
        ++rows;
        std::vector<std::string> cols;
        std::stringstream ls(line);
        for (std::string c; std::getline(ls, c, ',');) {
            cols.push_back(c);
        }
        ASSERT_EQ(cols.size(), 8u) << line;
        EXPECT_EQ(std::stoi(cols[0]), rows);
        EXPECT_LE(std::stod(cols[6]), 1e-6);
    }
    EXPECT_EQ(rows, rep.iterations);

    const std::string summary = slurp(paths.summary);
    const RunReport back = report_from_json(summary);
    EXPECT_EQ(to_json(back), to_json(rep));
}

TEST(Run, DeterministicCsv)
{
    auto s = hilbert_family();
    s.config.max_outer = 25;
    EXPECT_EQ(iteration_csv(run_scenario(s)), iteration_csv(run_scenario(s)));
}

TEST(Run, SolverErrorsBecomeFailedReports)
{
    auto s = optimization_app();
    s.config.max_cuts = 1;
    s.bundle.start = Eigen::Vector3d(4, 4, -4);
    const auto rep = run_scenario(s);
    EXPECT_EQ(rep.outcome, Outcome::Failed);
    EXPECT_NE(rep.error.find("NON_CONVERGED"), std::string::npos) << rep.error;
    EXPECT_EQ(rep.invariants.size(), invariant_names().size());
    EXPECT_NE(exit_code(rep), 0);
}

TEST(Emit, IoErrorsNameThePath)
{
    const auto dir = scratch_dir("io");
    std::filesystem::create_directories(dir);
    std::ofstream(dir / "blocker") << "x";
    RunReport rep;
    rep.scenario = "s";
    try {
        emit_report(rep, dir / "blocker" / "out");
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), ErrorCode::IoError);
        EXPECT_NE(std::string(e.what()).find("blocker"), std::string::npos);
    }
}

TEST(Emit, CsvQuoting)
{
    EXPECT_EQ(detail::csv_field("1.5"), "1.5");
    EXPECT_EQ(detail::csv_field("a,b"), "\"a,b\"");
    EXPECT_EQ(detail::csv_field("say \"hi\""), "\"say \"\"hi\"\"\"");
    EXPECT_EQ(detail::csv_field("two\nlines"), "\"two\nlines\"");
}
