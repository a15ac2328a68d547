#pragma once

// Reader for the MATPOWER-style text case format:
//
//   mpc.baseMVA = 100;
//   mpc.bus = [ rows ];   mpc.gen = [ rows ];   mpc.branch = [ rows ];
//   mpc.gencost = [ rows ];   (optional)
//
// `%` starts a comment. Unknown blocks, strings and cell arrays are skipped.

#include <cctype>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <map>
#include <numbers>
#include <sstream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "lropf/network.hpp"

namespace lropf {

class CaseError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

namespace detail {

using Rows = std::vector<std::vector<double>>;

inline std::string strip_comments(std::string_view text) {
  std::string out;
  out.reserve(text.size());
  bool in_comment = false, in_string = false;
  for (char c : text) {
    if (c == '\n') {
      in_comment = in_string = false;
      out.push_back(c);
      continue;
    }
    if (in_comment) continue;
    if (c == '\'') in_string = !in_string;
    if (c == '%' && !in_string) {
      in_comment = true;
      continue;
    }
    out.push_back(c);
  }
  return out;
}

inline double parse_number(std::string_view tok, const std::string& where) {
  std::string s(tok);
  std::string lower;
  for (char c : s) lower.push_back(static_cast<char>(std::tolower(c)));
  if (lower == "inf" || lower == "+inf") return INFINITY;
  if (lower == "-inf") return -INFINITY;
  char* end = nullptr;
  double v = std::strtod(s.c_str(), &end);
  if (end == s.c_str() || *end != '\0')
    throw CaseError("syntax error in " + where + ": bad number '" + s + "'");
  return v;
}

inline Rows parse_matrix(std::string_view body, const std::string& name) {
  Rows rows;
  std::vector<double> row;
  std::string tok;
  auto flush_tok = [&] {
    if (!tok.empty()) {
      row.push_back(parse_number(tok, "block '" + name + "'"));
      tok.clear();
    }
  };
  auto flush_row = [&] {
    flush_tok();
    if (!row.empty()) rows.push_back(std::move(row));
    row.clear();
  };
  for (char c : body) {
    if (c == ';' || c == '\n') {
      flush_row();
    } else if (std::isspace(static_cast<unsigned char>(c)) || c == ',') {
      flush_tok();
    } else {
      tok.push_back(c);
    }
  }
  flush_row();
  for (const auto& r : rows)
    if (r.size() != rows.front().size())
      throw CaseError("syntax error in block '" + name +
                      "': rows have different column counts");
  return rows;
}

struct RawCase {
  std::map<std::string, Rows> matrices;
  std::map<std::string, double> scalars;
};

inline RawCase scan(std::string_view original) {
  const std::string text = strip_comments(original);
  RawCase raw;
  std::size_t i = 0;
  const std::size_t n = text.size();
  auto skip_ws = [&] {
    while (i < n && std::isspace(static_cast<unsigned char>(text[i]))) ++i;
  };
  auto find_closing = [&](char open, char close) -> std::size_t {
    int depth = 0;
    for (std::size_t j = i; j < n; ++j) {
      if (text[j] == open) ++depth;
      if (text[j] == close && --depth == 0) return j;
    }
    return std::string::npos;
  };

  while (i < n) {
    skip_ws();
    if (i >= n) break;
    // `function mpc = caseX` header line.
    if (text.compare(i, 8, "function") == 0) {
      while (i < n && text[i] != '\n') ++i;
      continue;
    }
    if (!(std::isalpha(static_cast<unsigned char>(text[i])) || text[i] == '_')) {
      // Stray punctuation such as a lone ';'.
      if (text[i] == ';') {
        ++i;
        continue;
      }
      throw CaseError(std::string("syntax error: unexpected character '") +
                      text[i] + "'");
    }
    std::size_t start = i;
    while (i < n && (std::isalnum(static_cast<unsigned char>(text[i])) ||
                     text[i] == '_' || text[i] == '.'))
      ++i;
    std::string name = text.substr(start, i - start);
    if (name.rfind("mpc.", 0) == 0) name = name.substr(4);
    skip_ws();
    if (i >= n || text[i] != '=') {
      // Bare statements like `return` are ignored.
      while (i < n && text[i] != '\n' && text[i] != ';') ++i;
      continue;
    }
    ++i;
    skip_ws();
    if (i >= n) throw CaseError("syntax error: missing value for '" + name + "'");
    const char c = text[i];
    if (c == '[') {
      std::size_t close = find_closing('[', ']');
      if (close == std::string::npos)
        throw CaseError("syntax error: unterminated matrix block '" + name + "'");
      raw.matrices[name] =
          parse_matrix(std::string_view(text).substr(i + 1, close - i - 1), name);
      i = close + 1;
    } else if (c == '{') {
      std::size_t close = find_closing('{', '}');
      if (close == std::string::npos)
        throw CaseError("syntax error: unterminated cell block '" + name + "'");
      i = close + 1;
    } else if (c == '\'') {
      std::size_t close = text.find('\'', i + 1);
      if (close == std::string::npos)
        throw CaseError("syntax error: unterminated string '" + name + "'");
      i = close + 1;
    } else {
      std::size_t end = i;
      while (end < n && text[end] != ';' && text[end] != '\n') ++end;
      std::string value = text.substr(i, end - i);
      while (!value.empty() && std::isspace(static_cast<unsigned char>(value.back())))
        value.pop_back();
      raw.scalars[name] = parse_number(value, "'" + name + "'");
      i = end;
    }
  }
  return raw;
}

inline const Rows& require_block(const RawCase& raw, const std::string& name,
                                 std::size_t min_cols) {
  auto it = raw.matrices.find(name);
  if (it == raw.matrices.end())
    throw CaseError("missing '" + name + "' block");
  if (!it->second.empty() && it->second.front().size() < min_cols)
    throw CaseError("syntax error in block '" + name + "': expected at least " +
                    std::to_string(min_cols) + " columns");
  return it->second;
}

}  // namespace detail

/// Parse case-file text into a per-unit Network. Out-of-service generators and
/// branches are dropped. Throws CaseError on malformed input, dangling bus
/// references, nonconvex or non-polynomial costs.
inline Network parse_case(std::string_view text) {
  using namespace detail;
  const RawCase raw = scan(text);

  Network net;
  auto base = raw.scalars.find("baseMVA");
  if (base == raw.scalars.end()) throw CaseError("missing 'baseMVA'");
  net.baseMVA = base->second;
  if (!(net.baseMVA > 0.0)) throw CaseError("baseMVA must be positive");
  const double sb = net.baseMVA;

  for (const auto& row : require_block(raw, "bus", 13)) {
    Bus b;
    b.id = static_cast<int>(row[0]);
    b.type = static_cast<int>(row[1]);
    b.Pd = row[2] / sb;
    b.Qd = row[3] / sb;
    b.Gs = row[4] / sb;
    b.Bs = row[5] / sb;
    b.Vmax = row[11];
    b.Vmin = row[12];
    net.buses.push_back(b);
  }
  net.reindex();

  const Rows& gen_rows = require_block(raw, "gen", 10);
  const Rows* cost_rows = nullptr;
  if (auto it = raw.matrices.find("gencost"); it != raw.matrices.end()) {
    cost_rows = &it->second;
    if (cost_rows->size() < gen_rows.size())
      throw CaseError("'gencost' has fewer rows than 'gen'");
  }

  for (std::size_t i = 0; i < gen_rows.size(); ++i) {
    const auto& row = gen_rows[i];
    if (row[7] <= 0.0) continue;
    Generator g;
    g.bus = static_cast<int>(row[0]);
    if (net.index_of(g.bus) < 0)
      throw CaseError("generator " + std::to_string(i + 1) +
                      " references unknown bus " + std::to_string(g.bus));
    g.Qmax = row[3] / sb;
    g.Qmin = row[4] / sb;
    g.Pmax = row[8] / sb;
    g.Pmin = row[9] / sb;
    if (cost_rows) {
      const auto& c = (*cost_rows)[i];
      if (c.size() < 4) throw CaseError("syntax error in block 'gencost'");
      const int model = static_cast<int>(c[0]);
      const int ncoef = static_cast<int>(c[3]);
      if (model == 1)
        throw CaseError("generator " + std::to_string(i + 1) +
                        ": piecewise-linear cost model is unsupported");
      if (model != 2) throw CaseError("unknown cost model " + std::to_string(model));
      if (ncoef > 3)
        throw CaseError("generator " + std::to_string(i + 1) +
                        ": polynomial cost of degree > 2 is unsupported");
      if (c.size() < static_cast<std::size_t>(4 + ncoef))
        throw CaseError("syntax error in block 'gencost': missing coefficients");
      // Coefficients are stored highest degree first.
      double coef[3] = {0.0, 0.0, 0.0};  // c0, c1, c2
      for (int d = 0; d < ncoef; ++d) coef[ncoef - 1 - d] = c[4 + d];
      g.c0 = coef[0];
      g.c1 = coef[1];
      g.c2 = coef[2];
      if (g.c2 < 0.0)
        throw CaseError("generator " + std::to_string(i + 1) +
                        ": nonconvex cost (c2 < 0)");
    }
    net.gens.push_back(g);
  }

  for (const auto& row : require_block(raw, "branch", 11)) {
    if (row[10] <= 0.0) continue;
    Branch br;
    br.from = static_cast<int>(row[0]);
    br.to = static_cast<int>(row[1]);
    if (net.index_of(br.from) < 0 || net.index_of(br.to) < 0)
      throw CaseError("branch " + std::to_string(br.from) + "-" +
                      std::to_string(br.to) + " references an unknown bus");
    br.r = row[2];
    br.x = row[3];
    br.bc = row[4];
    br.Smax = row[5] / sb;
    br.tap = row[8] == 0.0 ? 1.0 : row[8];
    br.shift = row[9] * std::numbers::pi / 180.0;
    net.branches.push_back(br);
  }
  return net;
}

inline Network read_case_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw CaseError("cannot open case file '" + path + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_case(ss.str());
}

}  // namespace lropf
