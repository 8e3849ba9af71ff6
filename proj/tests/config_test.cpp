#include "ejcbf/config.hpp"

#include <gtest/gtest.h>

#include <cstdio>
#include <filesystem>

#include "ejcbf/io.hpp"
#include "ejcbf/rng.hpp"
#include "ejcbf/sim.hpp"

using namespace ejcbf;

#ifndef EJCBF_SOURCE_DIR
#define EJCBF_SOURCE_DIR "."
#endif

TEST(Toml, ParsesScalarsStringsAndArrays) {
  const auto doc = TomlDoc::parse(
      "# comment\n"
      "top = 3\n"
      "[a]\n"
      "x = 1.5e-3\n"
      "flag = true\n"
      "name = \"hello world\"\n"
      "arr = [1, 2.5, -3]\n"
      "\n"
      "[b]\n"
      "x = -7\n");
  EXPECT_EQ(doc.number("top"), 3.0);
  EXPECT_EQ(doc.number("a.x"), 1.5e-3);
  EXPECT_TRUE(doc.flag("a.flag"));
  EXPECT_EQ(doc.text("a.name"), "hello world");
  ASSERT_EQ(doc.array("a.arr").size(), 3u);
  EXPECT_EQ(doc.array("a.arr")[2], -3.0);
  EXPECT_EQ(doc.number("b.x"), -7.0);
  EXPECT_FALSE(doc.has("b.y"));
  EXPECT_EQ(doc.number_or("b.y", 42.0), 42.0);
}

TEST(Toml, RejectsMalformedInput) {
  EXPECT_THROW(TomlDoc::parse("[unterminated\n"), ConfigError);
  EXPECT_THROW(TomlDoc::parse("x 3\n"), ConfigError);
  EXPECT_THROW(TomlDoc::parse("x = 3abc\n"), ConfigError);
  EXPECT_THROW(TomlDoc::parse("x = [1, 2\n"), ConfigError);
  EXPECT_THROW(TomlDoc::parse("x = \"open\n"), ConfigError);
  EXPECT_THROW(TomlDoc::parse("[]\nx = 1\n"), ConfigError);
}

TEST(Toml, TypeMismatchAndMissingKeyThrow) {
  const auto doc = TomlDoc::parse("x = 3\ns = \"t\"\n");
  EXPECT_THROW(doc.number("missing"), ConfigError);
  EXPECT_THROW(doc.flag("x"), ConfigError);
  EXPECT_THROW(doc.array("s"), ConfigError);
}

TEST(Toml, EmitParseRoundTripIsIdempotent) {
  const std::string text =
      "[sec]\n"
      "a = 0.1\n"
      "b = [1e10, -2.25]\n"
      "c = \"v\"\n"
      "d = false\n";
  const std::string once = TomlDoc::parse(text).emit();
  const std::string twice = TomlDoc::parse(once).emit();
  EXPECT_EQ(once, twice);
}

TEST(Config, RobotParamsRoundTrip) {
  RobotParams p;
  p.link_masses = Vector2d(1.25, 0.75);
  p.link_lengths = Vector2d(0.9, 1.1);
  p.motor_inertia_scale = 0.002;
  p.stiffness_scale = 3.0;
  p.gravity = 0.0;
  TomlDoc doc;
  robot_params_to_toml(p, doc);
  const RobotParams q = robot_params_from_toml(TomlDoc::parse(doc.emit()));
  EXPECT_EQ(q.link_masses, p.link_masses);
  EXPECT_EQ(q.link_lengths, p.link_lengths);
  EXPECT_EQ(q.motor_inertia_scale, p.motor_inertia_scale);
  EXPECT_EQ(q.stiffness_scale, p.stiffness_scale);
  EXPECT_EQ(q.gravity, p.gravity);
}

TEST(Config, KernelParamsRoundTrip) {
  RandomStream rng(11);
  KernelParams kp = KernelParams::isotropic(2, 8, 1.0, 1.0, 1.0, 1.0);
  for (auto& k : kp.kf) {
    k.signal_std = rng.uniform(0.1, 3.0);
    for (int d = 0; d < 8; ++d) k.lengthscales(d) = rng.uniform(0.2, 5.0);
  }
  for (auto& row : kp.kg)
    for (auto& k : row) {
      k.signal_std = rng.uniform(0.1, 3.0);
      for (int d = 0; d < 8; ++d) k.lengthscales(d) = rng.uniform(0.2, 5.0);
    }
  TomlDoc doc;
  kernel_params_to_toml(kp, doc);
  const KernelParams back = kernel_params_from_toml(TomlDoc::parse(doc.emit()));
  for (int i = 0; i < 2; ++i) {
    EXPECT_EQ(back.kf[i].signal_std, kp.kf[i].signal_std);
    EXPECT_EQ(back.kf[i].lengthscales, kp.kf[i].lengthscales);
    for (int j = 0; j < 2; ++j) {
      EXPECT_EQ(back.kg[i][j].signal_std, kp.kg[i][j].signal_std);
      EXPECT_EQ(back.kg[i][j].lengthscales, kp.kg[i][j].lengthscales);
    }
  }
}

TEST(Config, StudyConfigRoundTripAndDefaults) {
  StudyConfig c;
  c.n_trials = 17;
  c.use_paper_gamma = true;
  c.L(0, 0) = 5000.0;
  const StudyConfig back = study_config_from_toml(TomlDoc::parse(study_config_to_toml(c).emit()));
  EXPECT_EQ(back.n_trials, 17);
  EXPECT_TRUE(back.use_paper_gamma);
  EXPECT_EQ(back.L(0, 0), 5000.0);
  EXPECT_EQ(back.beta, 24.0);
  EXPECT_EQ(back.zeta, 0.95);
  EXPECT_EQ(back.kappa, 16.0);
  EXPECT_EQ(back.robot.gravity, 0.0);
  EXPECT_FALSE(back.have_kernels);
}

TEST(Config, ShippedPaperTomlCarriesStudyDefaults) {
  const std::string path = std::string(EJCBF_SOURCE_DIR) + "/paper.toml";
  const StudyConfig c = study_config_from_toml(TomlDoc::parse(read_text_file(path)));
  EXPECT_EQ(c.beta, 24.0);
  EXPECT_EQ(c.zeta, 0.95);
  EXPECT_EQ(c.sigma_on, 0.1);
  EXPECT_EQ(c.n_train, 786);
  EXPECT_EQ(c.kappa, 16.0);
  EXPECT_EQ(c.robot.motor_inertia_scale, 0.001);
  EXPECT_EQ(c.robot.stiffness_scale, 1.0);
  EXPECT_EQ(c.paper_gamma_lo, 97.0);
  EXPECT_EQ(c.paper_gamma_hi, 1640.0);
  EXPECT_EQ(c.L(0, 0), 1e4);
  EXPECT_EQ(c.L(1, 7), 10.0);
  EXPECT_EQ(c.n_trials, 100);
  EXPECT_EQ(c.c_lo, 4.0);
  EXPECT_EQ(c.c_hi, 100.0);
}

TEST(Io, TrainingSetCsvRoundTripIsExact) {
  const RobotParams p;
  const auto t = generate_training_data(p, GridSpec::paper(), 786, 0.1, Vector2d(-30, -30),
                                        Vector2d(30, 30), 31);
  const auto back = training_set_from_csv(training_set_to_csv(t));
  EXPECT_EQ(back.X, t.X);
  EXPECT_EQ(back.U, t.U);
  EXPECT_EQ(back.Y, t.Y);
  EXPECT_EQ(back.noise_std, t.noise_std);
}

TEST(Io, TrainingSetCsvRejectsRaggedRows) {
  EXPECT_THROW(training_set_from_csv("x0,x1,u0,y0\n1,2,3\n"), ConfigError);
  EXPECT_THROW(training_set_from_csv(""), ConfigError);
}

TEST(Io, GpModelJsonRoundTripPreservesPredictions) {
  const RobotParams p;
  const auto t = generate_training_data(p, GridSpec::paper(), 786, 0.1, Vector2d(-30, -30),
                                        Vector2d(30, 30), 41);
  TrainingSet small;
  small.X = t.X.topRows(40);
  small.U = t.U.topRows(40);
  small.Y = t.Y.topRows(40);
  small.noise_std = t.noise_std;
  const auto kp = KernelParams::isotropic(2, 8, 1.2, 0.8, 20.0, 1.3);
  const GpModel model(small, Prior::zero(2), kp, 24.0, 0.05);
  const GpModel back = gp_model_from_json(gp_model_to_json(model), Prior::zero(2));
  RandomStream rng(5);
  for (int rep = 0; rep < 20; ++rep) {
    VectorXd x(8);
    for (int d = 0; d < 8; ++d) x(d) = rng.uniform(-1.5, 1.5);
    VectorXd mf1, sf1, mf2, sf2;
    MatrixXd mg1, sg1, mg2, sg2;
    model.predict_f(x, mf1, sf1);
    back.predict_f(x, mf2, sf2);
    model.predict_g(x, mg1, sg1);
    back.predict_g(x, mg2, sg2);
    EXPECT_LT((mf1 - mf2).norm(), 1e-12);
    EXPECT_LT((sf1 - sf2).norm(), 1e-12);
    EXPECT_LT((mg1 - mg2).norm(), 1e-12);
    EXPECT_LT((sg1 - sg2).norm(), 1e-12);
  }
}

TEST(Io, GpModelJsonRejectsWrongVersion) {
  EXPECT_THROW(gp_model_from_json("{\"format\":\"ejcbf-gp\",\"version\":99}", Prior::zero(2)),
               ConfigError);
  EXPECT_THROW(gp_model_from_json("not json", Prior::zero(2)), ConfigError);
}

TEST(Io, TextFileRoundTrip) {
  const auto dir = std::filesystem::temp_directory_path() / "ejcbf_io_test";
  std::filesystem::create_directories(dir);
  const auto path = (dir / "probe.txt").string();
  write_text_file(path, "line1\nline2\n");
  EXPECT_EQ(read_text_file(path), "line1\nline2\n");
  std::filesystem::remove_all(dir);
  EXPECT_THROW(read_text_file(path), ConfigError);
}
