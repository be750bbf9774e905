#include "tica/template_prior.hpp"

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <map>
#include <utility>

#include <json.hpp>

#include "tica/dual_regression.hpp"
#include "tica/matrix_io.hpp"
#include "tica/parallel.hpp"

namespace tica {

namespace {

double row_median(const Vector& row) {
  std::vector<double> values(row.data(), row.data() + row.size());
  const std::size_t mid = values.size() / 2;
  std::nth_element(values.begin(), values.begin() + mid, values.end());
  double hi = values[mid];
  if (values.size() % 2 == 0) {
    const double lo =
        *std::max_element(values.begin(), values.begin() + mid);
    return 0.5 * (lo + hi);
  }
  return hi;
}

}  // namespace

Vector Template::var_floor() const {
  Vector floor_q(l);
  const double global = var_total.size() > 0 ? var_total.maxCoeff() : 0.0;
  for (int q = 0; q < l; ++q) {
    double f = 1e-6 * row_median(var_total.row(q));
    if (!(f > 0.0)) f = 1e-6 * var_total.row(q).mean();
    if (!(f > 0.0)) f = 1e-6 * global;
    if (!(f > 0.0)) f = 1e-12;
    floor_q(q) = f;
  }
  return floor_q;
}

Matrix Template::var_between_floored() const {
  const Vector floor_q = var_floor();
  Matrix out = var_between;
  for (int q = 0; q < l; ++q)
    out.row(q) = out.row(q).cwiseMax(floor_q(q));
  return out;
}

Template accumulate_estimates(const std::vector<SubjectEstimate>& estimates) {
  if (estimates.empty())
    throw InconsistentCohort("accumulate_estimates: empty cohort");

  std::map<int, std::pair<const Matrix*, const Matrix*>> by_subject;
  for (const auto& e : estimates) {
    auto& slot = by_subject[e.subject];
    if (e.session == 1) {
      if (slot.first != nullptr)
        throw InconsistentCohort("duplicate session 1 for subject " +
                                 std::to_string(e.subject));
      slot.first = &e.sources;
    } else if (e.session == 2) {
      if (slot.second != nullptr)
        throw InconsistentCohort("duplicate session 2 for subject " +
                                 std::to_string(e.subject));
      slot.second = &e.sources;
    } else {
      throw InconsistentCohort("subject " + std::to_string(e.subject) +
                               ": session must be 1 or 2");
    }
  }

  const long n = static_cast<long>(by_subject.size());
  if (n < 2) throw DegenerateInput("accumulate_estimates: need n >= 2 subjects");

  const Matrix* first = nullptr;
  for (const auto& [subject, pair] : by_subject) {
    if (pair.first == nullptr || pair.second == nullptr)
      throw InconsistentCohort("subject " + std::to_string(subject) +
                               " is missing a session");
    for (const Matrix* m : {pair.first, pair.second}) {
      if (first == nullptr) first = m;
      if (m->rows() != first->rows() || m->cols() != first->cols())
        throw InconsistentCohort("subject " + std::to_string(subject) +
                                 " has mismatched map dimensions");
    }
  }

  const Eigen::Index l = first->rows();
  const Eigen::Index v = first->cols();
  const double denom = static_cast<double>(n - 1);

  Template t;
  t.l = static_cast<int>(l);
  t.v = v;
  t.n_subjects = static_cast<int>(n);
  t.mean = Matrix::Zero(l, v);
  Matrix sum1 = Matrix::Zero(l, v), sq1 = Matrix::Zero(l, v);
  Matrix sum2 = Matrix::Zero(l, v), sq2 = Matrix::Zero(l, v);
  Matrix sumd = Matrix::Zero(l, v), sqd = Matrix::Zero(l, v);
  for (const auto& [subject, pair] : by_subject) {
    const Matrix& s1 = *pair.first;
    const Matrix& s2 = *pair.second;
    sum1 += s1;
    sq1 += s1.cwiseProduct(s1);
    sum2 += s2;
    sq2 += s2.cwiseProduct(s2);
    const Matrix d = s2 - s1;
    sumd += d;
    sqd += d.cwiseProduct(d);
  }
  const double nn = static_cast<double>(n);
  t.mean = (sum1 + sum2) / (2.0 * nn);
  // Sample variances over subjects, one per session, then their average.
  const Matrix var1 = (sq1 - sum1.cwiseProduct(sum1) / nn) / denom;
  const Matrix var2 = (sq2 - sum2.cwiseProduct(sum2) / nn) / denom;
  t.var_total = 0.5 * (var1 + var2);
  t.var_noise = 0.5 * (sqd - sumd.cwiseProduct(sumd) / nn) / denom;
  t.var_between = (t.var_total - t.var_noise).cwiseMax(0.0);
  return t;
}

Template build_template(const std::vector<std::vector<Matrix>>& subjects,
                        const Matrix& s_grp, Split split, Scaling scaling,
                        int threads) {
  const long n = static_cast<long>(subjects.size());
  if (n < 2) throw DegenerateInput("build_template: need n >= 2 subjects");

  std::vector<SubjectEstimate> estimates(static_cast<std::size_t>(2 * n));
  std::vector<std::string> failures(static_cast<std::size_t>(n));
  parallel_for(n, threads, [&](long begin, long end) {
    for (long i = begin; i < end; ++i) {
      try {
        const auto& runs = subjects[static_cast<std::size_t>(i)];
        Matrix session1, session2;
        if (split == Split::halve) {
          if (runs.size() != 1)
            throw InconsistentCohort("expected exactly one run per subject");
          const ScaledData scaled = center_scale(runs[0], scaling);
          std::tie(session1, session2) = split_sessions(scaled.data);
        } else {
          if (runs.size() != 2)
            throw InconsistentCohort("expected exactly two runs per subject");
          session1 = center_scale(runs[0], scaling).data;
          session2 = center_scale(runs[1], scaling).data;
        }
        const int id = static_cast<int>(i);
        estimates[static_cast<std::size_t>(2 * i)] = {
            id, 1, dual_regress(session1, s_grp).sources};
        estimates[static_cast<std::size_t>(2 * i + 1)] = {
            id, 2, dual_regress(session2, s_grp).sources};
      } catch (const Error& e) {
        failures[static_cast<std::size_t>(i)] = e.what();
      }
    }
  });
  for (long i = 0; i < n; ++i) {
    const auto& f = failures[static_cast<std::size_t>(i)];
    if (!f.empty())
      throw InconsistentCohort("subject " + std::to_string(i) + ": " + f);
  }
  return accumulate_estimates(estimates);
}

void save_template(const std::string& dir, const Template& t) {
  std::filesystem::create_directories(dir);
  nlohmann::json meta;
  meta["l"] = t.l;
  meta["v"] = t.v;
  meta["n_subjects"] = t.n_subjects;
  meta["version"] = 1;
  std::ofstream out(dir + "/meta.json");
  if (!out) throw IoError("cannot write " + dir + "/meta.json");
  out << meta.dump(2) << "\n";
  io::write_matrix_bin(dir + "/mean.bin", t.mean);
  io::write_matrix_bin(dir + "/var_between.bin", t.var_between);
  io::write_matrix_bin(dir + "/var_total.bin", t.var_total);
  io::write_matrix_bin(dir + "/var_noise.bin", t.var_noise);
}

Template load_template(const std::string& dir) {
  std::ifstream in(dir + "/meta.json");
  if (!in) throw MissingArtifact("missing template meta: " + dir + "/meta.json");
  nlohmann::json meta;
  try {
    in >> meta;
  } catch (const nlohmann::json::exception& e) {
    throw FormatError("bad template meta: " + std::string(e.what()));
  }
  Template t;
  try {
    t.l = meta.at("l").get<int>();
    t.v = meta.at("v").get<long>();
    t.n_subjects = meta.at("n_subjects").get<int>();
  } catch (const nlohmann::json::exception& e) {
    throw FormatError("bad template meta fields: " + std::string(e.what()));
  }
  t.mean = io::read_matrix_bin(dir + "/mean.bin");
  t.var_between = io::read_matrix_bin(dir + "/var_between.bin");
  t.var_total = io::read_matrix_bin(dir + "/var_total.bin");
  t.var_noise = io::read_matrix_bin(dir + "/var_noise.bin");
  for (const Matrix* m :
       {&t.mean, &t.var_between, &t.var_total, &t.var_noise}) {
    if (m->rows() != t.l || m->cols() != t.v)
      throw FormatError("template maps disagree with meta dimensions: " + dir);
  }
  return t;
}

}  // namespace tica
