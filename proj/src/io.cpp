#include "exactmeta/io.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <fstream>
#include <map>
#include <sstream>

#include "exactmeta/errors.hpp"

namespace exactmeta::io {

namespace {

std::string trim(const std::string& s) {
  auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return "";
  auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

std::vector<std::string> split(const std::string& line, char sep) {
  std::vector<std::string> out;
  std::stringstream ss(line);
  std::string cell;
  while (std::getline(ss, cell, sep)) out.push_back(trim(cell));
  if (!line.empty() && line.back() == sep) out.push_back("");
  return out;
}

double parse_double(const std::string& path, int line_no,
                    const std::string& cell) {
  double v = 0.0;
  auto [ptr, ec] = std::from_chars(cell.data(), cell.data() + cell.size(), v);
  if (ec != std::errc{} || ptr != cell.data() + cell.size())
    throw input_error(path + ":" + std::to_string(line_no) +
                      ": not a number: '" + cell + "'");
  return v;
}

int parse_int(const std::string& path, int line_no, const std::string& cell) {
  int v = 0;
  auto [ptr, ec] = std::from_chars(cell.data(), cell.data() + cell.size(), v);
  if (ec != std::errc{} || ptr != cell.data() + cell.size())
    throw input_error(path + ":" + std::to_string(line_no) +
                      ": not an integer: '" + cell + "'");
  return v;
}

// rows as cells, header lowercased; blank lines skipped
struct Table {
  std::vector<std::string> header;
  std::vector<std::pair<int, std::vector<std::string>>> rows;  // (line, cells)
};

Table read_table(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw input_error("cannot open " + path);
  Table t;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    auto cells = split(line, ',');
    if (t.header.empty()) {
      for (auto& c : cells)
        for (auto& ch : c) ch = static_cast<char>(std::tolower(ch));
      t.header = cells;
    } else {
      t.rows.emplace_back(line_no, cells);
    }
  }
  if (t.header.empty()) throw input_error(path + ": empty file");
  return t;
}

void expect_width(const std::string& path, const Table& t, std::size_t n) {
  for (const auto& [line_no, cells] : t.rows)
    if (cells.size() != n)
      throw input_error(path + ":" + std::to_string(line_no) + ": expected " +
                        std::to_string(n) + " columns, got " +
                        std::to_string(cells.size()));
}

std::string fmt(double v) {
  char buf[32];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, ptr);
}

std::ofstream open_out(const std::string& path) {
  std::ofstream out(path);
  if (!out) throw input_error("cannot write " + path);
  return out;
}

}  // namespace

uni::UnivariateData read_uni_csv(const std::string& path) {
  Table t = read_table(path);
  if (t.header != std::vector<std::string>{"y", "variance"})
    throw input_error(path + ":1: expected header 'y,variance'");
  expect_width(path, t, 2);
  uni::UnivariateData data;
  for (const auto& [line_no, cells] : t.rows) {
    data.y.push_back(parse_double(path, line_no, cells[0]));
    data.sigma2.push_back(parse_double(path, line_no, cells[1]));
  }
  data.validate();
  return data;
}

void write_uni_csv(const std::string& path, const uni::UnivariateData& data) {
  auto out = open_out(path);
  out << "y,variance\n";
  for (int i = 0; i < data.k(); ++i)
    out << fmt(data.y[i]) << "," << fmt(data.sigma2[i]) << "\n";
}

dta::Data read_dta_csv(const std::string& path) {
  Table t = read_table(path);
  const std::vector<std::string> counts{"tp", "fp", "fn", "tn"};
  const std::vector<std::string> summaries{"ya", "yb", "va", "vb"};
  dta::Data data;
  expect_width(path, t, 4);
  if (t.header == counts) {
    for (const auto& [line_no, cells] : t.rows) {
      double tp = parse_double(path, line_no, cells[0]);
      double fp = parse_double(path, line_no, cells[1]);
      double fn = parse_double(path, line_no, cells[2]);
      double tn = parse_double(path, line_no, cells[3]);
      if (tp < 0 || fp < 0 || fn < 0 || tn < 0)
        throw input_error(path + ":" + std::to_string(line_no) +
                          ": negative count");
      data.push_back(dta::study_from_counts(tp, fp, fn, tn));
    }
  } else if (t.header == summaries) {
    for (const auto& [line_no, cells] : t.rows) {
      dta::DTAStudy s;
      s.yA = parse_double(path, line_no, cells[0]);
      s.yB = parse_double(path, line_no, cells[1]);
      s.sA2 = parse_double(path, line_no, cells[2]);
      s.sB2 = parse_double(path, line_no, cells[3]);
      data.push_back(s);
    }
  } else {
    throw input_error(path + ":1: expected header 'tp,fp,fn,tn' or "
                      "'yA,yB,vA,vB'");
  }
  dta::validate(data);
  return data;
}

void write_dta_csv(const std::string& path, const dta::Data& data) {
  auto out = open_out(path);
  out << "yA,yB,vA,vB\n";
  for (const auto& s : data)
    out << fmt(s.yA) << "," << fmt(s.yB) << "," << fmt(s.sA2) << ","
        << fmt(s.sB2) << "\n";
}

NmaInput read_nma_csv(const std::string& path) {
  Table t = read_table(path);
  NmaInput input;
  if (t.header == std::vector<std::string>{"study", "treatment", "events",
                                           "n"}) {
    input.arm_level = true;
    expect_width(path, t, 4);
    for (const auto& [line_no, cells] : t.rows) {
      net::ArmRecord a;
      a.study = parse_int(path, line_no, cells[0]);
      a.treatment = parse_int(path, line_no, cells[1]);
      a.events = parse_double(path, line_no, cells[2]);
      a.n = parse_double(path, line_no, cells[3]);
      if (a.n <= 0 || a.events < 0 || a.events > a.n)
        throw input_error(path + ":" + std::to_string(line_no) +
                          ": events must lie in [0, n]");
      input.p = std::max(input.p, a.treatment);
      input.arms.push_back(a);
    }
  } else if (t.header ==
             std::vector<std::string>{"study", "treatments", "y", "s"}) {
    expect_width(path, t, 4);
    for (const auto& [line_no, cells] : t.rows) {
      net::ContrastStudy s;
      auto ids = split(cells[1], ';');
      auto ys = split(cells[2], ';');
      auto ss = split(cells[3], ';');
      std::size_t pi = ids.size();
      if (ys.size() != pi || ss.size() != pi * pi)
        throw input_error(path + ":" + std::to_string(line_no) +
                          ": treatments/y/S sizes disagree");
      s.y.resize(static_cast<int>(pi));
      s.S.resize(static_cast<int>(pi), static_cast<int>(pi));
      for (std::size_t j = 0; j < pi; ++j) {
        s.treatments.push_back(parse_int(path, line_no, ids[j]));
        s.y[static_cast<int>(j)] = parse_double(path, line_no, ys[j]);
        input.p = std::max(input.p, s.treatments.back());
      }
      for (std::size_t a = 0; a < pi; ++a)
        for (std::size_t b = 0; b < pi; ++b)
          s.S(static_cast<int>(a), static_cast<int>(b)) =
              parse_double(path, line_no, ss[a * pi + b]);
      input.studies.push_back(std::move(s));
    }
  } else {
    throw input_error(path + ":1: expected header 'study,treatment,events,n' "
                      "or 'study,treatments,y,S'");
  }
  if (input.p < 1) throw input_error(path + ": no non-reference treatments");
  return input;
}

void write_nma_arm_csv(const std::string& path,
                       const std::vector<net::ArmRecord>& arms) {
  auto out = open_out(path);
  out << "study,treatment,events,n\n";
  for (const auto& a : arms)
    out << a.study << "," << a.treatment << "," << fmt(a.events) << ","
        << fmt(a.n) << "\n";
}

void write_nma_contrast_csv(const std::string& path,
                            const std::vector<net::ContrastStudy>& studies) {
  auto out = open_out(path);
  out << "study,treatments,y,S\n";
  int id = 1;
  for (const auto& s : studies) {
    out << id++ << ",";
    for (std::size_t j = 0; j < s.treatments.size(); ++j)
      out << (j ? ";" : "") << s.treatments[j];
    out << ",";
    for (int j = 0; j < s.y.size(); ++j) out << (j ? ";" : "") << fmt(s.y[j]);
    out << ",";
    bool first = true;
    for (int a = 0; a < s.S.rows(); ++a)
      for (int b = 0; b < s.S.cols(); ++b) {
        out << (first ? "" : ";") << fmt(s.S(a, b));
        first = false;
      }
    out << "\n";
  }
}

}  // namespace exactmeta::io
