#pragma once

// Independent reference implementations used to cross-check the library.
// Everything here is written the slow, obvious way on purpose; none of it
// calls into the library code it checks.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

namespace oracle {

using nlohmann::json;

// FNV-1a 64-bit, written as the textbook loop.
inline std::uint64_t fnv1a64(const std::string& bytes) {
  std::uint64_t h = 14695981039346656037ull;
  for (unsigned char c : bytes) {
    h = h ^ static_cast<std::uint64_t>(c);
    h = h * 1099511628211ull;
  }
  return h;
}

inline std::string age_bucket(int age) {
  int lo = (age / 5) * 5;
  std::ostringstream os;
  os << lo << "-" << lo + 5;
  return os.str();
}

// Case-preserving merge: the card's own keys win, null values in the delta
// never erase, delta keys missing from the card are dropped.
inline json merge(const json& card, const json& delta) {
  json out = card;
  for (auto it = delta.begin(); it != delta.end(); ++it) {
    if (it.value().is_null()) continue;
    for (auto cit = out.begin(); cit != out.end(); ++cit) {
      std::string a = cit.key(), b = it.key();
      std::transform(a.begin(), a.end(), a.begin(), ::tolower);
      std::transform(b.begin(), b.end(), b.begin(), ::tolower);
      if (a == b) {
        cit.value() = it.value();
        break;
      }
    }
  }
  return out;
}

inline std::set<std::string> tokens(const std::string& text) {
  std::set<std::string> out;
  std::string cur;
  for (char raw : text) {
    char c = static_cast<char>(::tolower(static_cast<unsigned char>(raw)));
    bool keep = (c >= 'a' && c <= 'z') || (c >= '0' && c <= '9') || c == '#' ||
                c == '+' || c == '_';
    if (keep) {
      cur.push_back(c);
    } else if (!cur.empty()) {
      out.insert(cur);
      cur.clear();
    }
  }
  if (!cur.empty()) out.insert(cur);
  return out;
}

inline double jaccard(const std::string& a, const std::string& b) {
  std::set<std::string> ta = tokens(a), tb = tokens(b);
  if (ta.empty() && tb.empty()) return 1.0;
  std::size_t inter = 0;
  for (const auto& t : ta)
    if (tb.count(t)) ++inter;
  std::size_t uni = ta.size() + tb.size() - inter;
  if (uni == 0) return 1.0;
  return static_cast<double>(inter) / static_cast<double>(uni);
}

struct FilterParams {
  double wf = 0.4, wc = 0.4, wr = 0.2;
  double freq_floor = 0.2, cons_floor = 0.35, recip_floor = 0.2;
  double suspicious = 0.25, risky = 0.5;
};

// Account-filter score and label, recomputed from first principles.
inline std::pair<double, std::string> account_score(double freq, double cons,
                                                    double recip,
                                                    const FilterParams& p = {}) {
  auto deficit = [](double value, double floor) {
    double d = 1.0 - value / floor;
    if (d < 0.0) d = 0.0;
    if (d > 1.0) d = 1.0;
    return d;
  };
  double score = p.wf * deficit(freq, p.freq_floor) + p.wc * deficit(cons, p.cons_floor) +
                 p.wr * deficit(recip, p.recip_floor);
  if (score < 0.0) score = 0.0;
  if (score > 1.0) score = 1.0;
  std::string label = "benign";
  if (score >= p.risky)
    label = "risky";
  else if (score >= p.suspicious)
    label = "suspicious";
  return {score, label};
}

// Paragraph flags for the lexical topic audit.
inline std::vector<bool> audit_flags(const std::vector<std::string>& paragraphs,
                                     const std::string& subject, double threshold) {
  std::vector<bool> out;
  for (const auto& p : paragraphs) out.push_back(jaccard(p, subject) < threshold);
  return out;
}

// Receptionist risk over a scripted session.
inline double session_risk(const std::vector<std::string>& caller_messages,
                           double claim_risk = 0.25, double link_risk = 0.4) {
  double risk = 0.0;
  for (const auto& m : caller_messages) {
    std::size_t claims = 0, links = 0;
    for (std::size_t pos = m.find("[claim:"); pos != std::string::npos;
         pos = m.find("[claim:", pos + 1))
      ++claims;
    for (std::size_t pos = m.find("[link:"); pos != std::string::npos;
         pos = m.find("[link:", pos + 1))
      ++links;
    for (std::size_t pos = m.find("[payment_request]"); pos != std::string::npos;
         pos = m.find("[payment_request]", pos + 1))
      ++links;
    risk += claim_risk * static_cast<double>(claims) + link_risk * static_cast<double>(links);
    if (risk > 1.0) risk = 1.0;
    if (risk < 0.0) risk = 0.0;
  }
  return risk;
}

// Trending scores: engagement decayed by repeated multiplication, summed per
// tag over the window, ties broken by tag.
inline std::vector<std::pair<std::string, double>> trending(
    const std::vector<std::tuple<std::string, std::int64_t, std::int64_t>>& posts,
    std::int64_t now, std::int64_t window) {
  std::map<std::string, double> scores;
  for (const auto& [tag, tick, engagement] : posts) {
    std::int64_t age = now - tick;
    if (age < 0 || age >= window) continue;
    double s = static_cast<double>(engagement);
    for (std::int64_t i = 0; i < age; ++i) s *= 0.9;
    scores[tag] += s;
  }
  std::vector<std::pair<std::string, double>> out(scores.begin(), scores.end());
  std::stable_sort(out.begin(), out.end(), [](const auto& a, const auto& b) {
    if (a.second != b.second) return a.second > b.second;
    return a.first < b.first;
  });
  return out;
}

// Metrics recount straight off the raw log lines.
struct Recount {
  std::optional<double> account_precision, account_recall;
  std::optional<double> post_precision, post_recall;
  std::optional<double> fraud_success_rate;
  std::optional<double> mean_turns_to_success;
  std::map<std::string, std::int64_t> event_counts;
  std::set<std::int64_t> removed_posts;
};

inline Recount recount(const std::vector<json>& lines, const json& manifest) {
  Recount r;
  std::set<std::string> banned;
  std::set<std::int64_t> removed;
  std::map<std::string, std::int64_t> turns;
  std::set<std::string> transferred;
  std::vector<double> turn_counts;

  for (const auto& e : lines) {
    std::string type = e.at("type").get<std::string>();
    r.event_counts[type] += 1;
    if (type == "AccountBanned") banned.insert(e.at("payload").at("account").get<std::string>());
    if (type == "PostRemoved") removed.insert(e.at("payload").at("post_id").get<std::int64_t>());
    if (type == "ChatTurn") turns[e.at("payload").at("victim").get<std::string>()] += 1;
    if (type == "TransferCompleted") {
      std::string v = e.at("payload").at("victim").get<std::string>();
      if (!transferred.count(v)) {
        transferred.insert(v);
        turn_counts.push_back(static_cast<double>(turns[v]));
      }
    }
  }
  r.removed_posts = removed;

  std::set<std::string> risky_accounts;
  for (const auto& a : manifest.at("risky_accounts")) risky_accounts.insert(a.get<std::string>());
  std::set<std::int64_t> risky_posts;
  for (const auto& p : manifest.at("risky_posts")) risky_posts.insert(p.get<std::int64_t>());

  if (!banned.empty()) {
    double tp = 0, fp = 0, fn = 0;
    for (const auto& b : banned) (risky_accounts.count(b) ? tp : fp) += 1;
    for (const auto& a : risky_accounts)
      if (!banned.count(a)) fn += 1;
    if (tp + fp > 0) r.account_precision = tp / (tp + fp);
    if (tp + fn > 0) r.account_recall = tp / (tp + fn);
  }
  if (!removed.empty()) {
    double tp = 0, fp = 0, fn = 0;
    for (const auto& p : removed) (risky_posts.count(p) ? tp : fp) += 1;
    for (const auto& p : risky_posts)
      if (!removed.count(p)) fn += 1;
    if (tp + fp > 0) r.post_precision = tp / (tp + fp);
    if (tp + fn > 0) r.post_recall = tp / (tp + fn);
  }
  if (manifest.contains("victims") && !manifest.at("victims").empty())
    r.fraud_success_rate = static_cast<double>(transferred.size()) /
                           static_cast<double>(manifest.at("victims").size());
  if (!turn_counts.empty()) {
    double total = 0;
    for (double t : turn_counts) total += t;
    r.mean_turns_to_success = total / static_cast<double>(turn_counts.size());
  }
  return r;
}

}  // namespace oracle
