#include "revert/hmm.hpp"
#include "revert/textio.hpp"

#include <fstream>

namespace revert::hmm {

namespace {
constexpr const char* kMagic = "revert-skill-model";
}

void write_model(std::ostream& os, const SkillModel& model) {
  const auto& em = model.emission();
  os << kMagic << " 1\n";
  os << "skill " << model.skill_id() << '\n';
  os << "kind " << to_string(em.kind()) << '\n';
  os << "modes " << model.modes() << '\n';
  os << "dim " << em.dim() << '\n';
  os << "order " << em.order() << '\n';
  os << "pi0\n";
  textio::write_row(os, model.pi0().transpose());
  os << "trans\n";
  textio::write_matrix(os, model.trans());
  for (int k = 0; k < model.modes(); ++k) {
    os << "mode " << k << '\n';
    if (em.is_var()) {
      os << "coef\n";
      textio::write_matrix(os, em.coef(k));
    } else {
      os << "mean\n";
      textio::write_row(os, em.mean(k).transpose());
    }
    os << "cov\n";
    textio::write_matrix(os, em.cov(k));
  }
  os << "end\n";
}

SkillModel read_model(std::istream& is) {
  textio::LineReader in(is);
  auto expect = [&](const std::string& key) {
    auto tok = in.expect_tokens(key);
    if (tok.front() != key) throw ParseError("expected '" + key + "'", in.line_no());
    return tok;
  };
  auto value = [&](const std::string& key) {
    auto tok = expect(key);
    if (tok.size() != 2) throw ParseError("expected '" + key + " <value>'", in.line_no());
    return tok[1];
  };
  if (expect(kMagic).size() != 2) throw ParseError("bad model header", in.line_no());
  const std::string skill = value("skill");
  EmissionKind kind;
  try {
    kind = emission_kind_from_string(value("kind"));
  } catch (const ParseError& e) {
    throw ParseError(e.what(), in.line_no());
  }
  const long k = textio::parse_long(value("modes"), in.line_no());
  const long d = textio::parse_long(value("dim"), in.line_no());
  const long r = textio::parse_long(value("order"), in.line_no());
  if (k < 1 || d < 1 || r < 0) throw ParseError("invalid model dimensions", in.line_no());
  expect("pi0");
  Vec pi0 = in.read_matrix(1, k).row(0).transpose();
  expect("trans");
  Mat trans = in.read_matrix(k, k);
  std::vector<Vec> means;
  std::vector<Mat> coefs, covs;
  for (long j = 0; j < k; ++j) {
    const auto tok = expect("mode");
    if (tok.size() != 2 || textio::parse_long(tok[1], in.line_no()) != j)
      throw ParseError("expected 'mode " + std::to_string(j) + "'", in.line_no());
    if (kind == EmissionKind::var) {
      expect("coef");
      coefs.push_back(in.read_matrix(d, d * r));
    } else {
      expect("mean");
      means.push_back(in.read_matrix(1, d).row(0).transpose());
    }
    expect("cov");
    covs.push_back(in.read_matrix(d, d));
  }
  expect("end");
  auto em = kind == EmissionKind::var
                ? EmissionModel::var(static_cast<int>(r), std::move(coefs), std::move(covs))
                : EmissionModel::gaussian(kind, std::move(means), std::move(covs));
  return SkillModel(skill, std::move(pi0), std::move(trans), std::move(em));
}

void save_model(const std::filesystem::path& path, const SkillModel& model) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write model file " + path.string());
  write_model(out, model);
}

SkillModel load_model(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open model file " + path.string());
  return read_model(in);
}

}  // namespace revert::hmm
