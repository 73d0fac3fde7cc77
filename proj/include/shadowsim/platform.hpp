#pragma once

#include <algorithm>
#include <functional>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "shadowsim/events.hpp"
#include "shadowsim/genbackend.hpp"

namespace shadowsim {

// ---------------------------------------------------------------------------
// Domain records
// ---------------------------------------------------------------------------

// Account kind is a ground-truth marker for evaluation; defenses must never
// read it.
enum class AccountKind { benign, victim, perpetrator_disguise };

inline std::string to_string(AccountKind k) {
  switch (k) {
    case AccountKind::benign: return "benign";
    case AccountKind::victim: return "victim";
    case AccountKind::perpetrator_disguise: return "perpetrator_disguise";
  }
  throw SimError("unreachable account kind");
}

inline AccountKind account_kind_from_string(const std::string& s) {
  if (s == "benign") return AccountKind::benign;
  if (s == "victim") return AccountKind::victim;
  if (s == "perpetrator_disguise") return AccountKind::perpetrator_disguise;
  throw SimError("unknown account kind: " + s);
}

struct AccountProfile {
  std::string name;  // doubles as the account id; must be unique
  std::string bio;
  std::string avatar_descriptor;
};

struct Account {
  std::string id;
  std::string bio;
  std::string avatar_descriptor;
  AccountKind kind = AccountKind::benign;
  Tick registered_at = 0;
  bool banned = false;
  std::set<std::string> following;
  std::set<std::string> followers;

  json to_json() const {
    return {{"id", id},
            {"bio", bio},
            {"avatar_descriptor", avatar_descriptor},
            {"kind", to_string(kind)},
            {"registered_at", registered_at},
            {"banned", banned},
            {"following", following},
            {"followers", followers}};
  }

  static Account from_json(const json& j) {
    Account a;
    a.id = j.at("id").get<std::string>();
    a.bio = j.at("bio").get<std::string>();
    a.avatar_descriptor = j.at("avatar_descriptor").get<std::string>();
    a.kind = account_kind_from_string(j.at("kind").get<std::string>());
    a.registered_at = j.at("registered_at").get<Tick>();
    a.banned = j.at("banned").get<bool>();
    a.following = j.at("following").get<std::set<std::string>>();
    a.followers = j.at("followers").get<std::set<std::string>>();
    return a;
  }

  bool operator==(const Account&) const = default;
};

struct Post {
  std::int64_t id = 0;
  std::string author;
  std::string topic_tag;  // always starts with '#'
  std::string body;
  std::vector<MediaAsset> media;
  Tick tick = 0;
  std::int64_t engagement = 0;
  bool is_ad = false;  // ground-truth marker, never visible to defenses
  bool removed = false;

  json to_json() const {
    json media_json = json::array();
    for (const auto& m : media) media_json.push_back(m.to_json());
    return {{"id", id},
            {"author", author},
            {"topic_tag", topic_tag},
            {"body", body},
            {"media", media_json},
            {"tick", tick},
            {"engagement", engagement},
            {"is_ad", is_ad},
            {"removed", removed}};
  }

  static Post from_json(const json& j) {
    Post p;
    p.id = j.at("id").get<std::int64_t>();
    p.author = j.at("author").get<std::string>();
    p.topic_tag = j.at("topic_tag").get<std::string>();
    p.body = j.at("body").get<std::string>();
    for (const auto& m : j.at("media")) p.media.push_back(MediaAsset::from_json(m));
    p.tick = j.at("tick").get<Tick>();
    p.engagement = j.at("engagement").get<std::int64_t>();
    p.is_ad = j.at("is_ad").get<bool>();
    p.removed = j.at("removed").get<bool>();
    return p;
  }

  bool operator==(const Post&) const = default;
};

struct DirectMessage {
  std::int64_t id = 0;
  std::string from;
  std::string to;
  std::string body;
  Tick tick = 0;
  bool blocked = false;

  json to_json() const {
    return {{"id", id},     {"from", from},   {"to", to},
            {"body", body}, {"tick", tick},   {"blocked", blocked}};
  }

  static DirectMessage from_json(const json& j) {
    DirectMessage d;
    d.id = j.at("id").get<std::int64_t>();
    d.from = j.at("from").get<std::string>();
    d.to = j.at("to").get<std::string>();
    d.body = j.at("body").get<std::string>();
    d.tick = j.at("tick").get<Tick>();
    d.blocked = j.at("blocked").get<bool>();
    return d;
  }

  bool operator==(const DirectMessage&) const = default;
};

enum class EngageKind { like, reply };

inline std::string to_string(EngageKind k) {
  return k == EngageKind::like ? "like" : "reply";
}

inline EngageKind engage_kind_from_string(const std::string& s) {
  if (s == "like") return EngageKind::like;
  if (s == "reply") return EngageKind::reply;
  throw SimError("unknown engagement kind: " + s);
}

struct Engagement {
  std::int64_t post_id = 0;
  EngageKind kind = EngageKind::like;
  bool operator==(const Engagement&) const = default;
};

// ---------------------------------------------------------------------------
// Platform state
// ---------------------------------------------------------------------------

// Everything an event can touch. `tick` is the tick of the last applied
// mutation, so a live run and a log replay land on identical states even
// when the run had trailing quiet ticks.
struct PlatformState {
  std::map<std::string, Account> accounts;
  std::map<std::int64_t, Post> posts;
  std::vector<DirectMessage> dms;
  // positions into dms of delivered (unblocked) messages, per recipient
  std::map<std::string, std::vector<std::size_t>> inbox_index;
  std::map<std::string, std::string> topic_subjects;
  std::map<std::string, std::vector<Engagement>> engagements_by;
  std::int64_t next_post_id = 0;
  std::int64_t next_dm_id = 0;
  Tick tick = 0;

  bool operator==(const PlatformState&) const = default;

  json to_json() const {
    json accounts_json = json::object();
    for (const auto& [id, a] : accounts) accounts_json[id] = a.to_json();
    json posts_json = json::array();
    for (const auto& [id, p] : posts) {
      (void)id;
      posts_json.push_back(p.to_json());
    }
    json dms_json = json::array();
    for (const auto& d : dms) dms_json.push_back(d.to_json());
    json eng_json = json::object();
    for (const auto& [account, entries] : engagements_by) {
      json arr = json::array();
      for (const auto& e : entries)
        arr.push_back({{"post_id", e.post_id}, {"kind", to_string(e.kind)}});
      eng_json[account] = arr;
    }
    return {{"accounts", accounts_json},
            {"posts", posts_json},
            {"dms", dms_json},
            {"topic_subjects", topic_subjects},
            {"engagements_by", eng_json},
            {"next_post_id", next_post_id},
            {"next_dm_id", next_dm_id},
            {"tick", tick}};
  }
};

// ---------------------------------------------------------------------------
// Platform
// ---------------------------------------------------------------------------

struct DmReceipt {
  std::int64_t id = 0;
  bool blocked = false;
};

enum class PostQuery { all, by_author, by_topic };

// The simulated social platform. Every mutation goes through commit(), which
// appends the event and routes it through the same apply() used by replay;
// state can always be rebuilt from the log alone.
class Platform {
 public:
  // Moderation hooks return a removal/block reason, or nullopt to allow.
  // They run only during live operation; replay consumes their recorded
  // outcomes instead of re-running them.
  using PostHook = std::function<std::optional<std::string>(const Post&)>;
  using DmHook = std::function<std::optional<std::string>(const DirectMessage&)>;

  explicit Platform(EventLog& log) : log_(log) {}

  void set_tick(Tick t) {
    if (t < clock_) throw SimError("platform clock cannot move backwards");
    clock_ = t;
  }
  Tick tick() const { return clock_; }

  void set_post_hook(PostHook hook) { post_hook_ = std::move(hook); }
  void set_dm_hook(DmHook hook) { dm_hook_ = std::move(hook); }

  const PlatformState& state() const { return state_; }

  // -- mutations --------------------------------------------------------

  std::string register_account(const AccountProfile& profile, AccountKind kind) {
    if (trim(profile.name).empty()) throw SimError("account name must be non-empty");
    if (kind == AccountKind::perpetrator_disguise &&
        (trim(profile.bio).empty() || trim(profile.avatar_descriptor).empty()))
      throw SimError("disguise accounts need name, bio, and avatar descriptor");
    if (state_.accounts.count(profile.name))
      throw SimError("account name already taken: " + profile.name);
    Account a;
    a.id = profile.name;
    a.bio = profile.bio;
    a.avatar_descriptor = profile.avatar_descriptor;
    a.kind = kind;
    a.registered_at = clock_;
    commit(EventType::AccountRegistered, {{"account", a.to_json()}});
    return a.id;
  }

  std::int64_t publish_post(const std::string& author, const std::string& topic_tag,
                            const std::string& body, std::vector<MediaAsset> media = {},
                            bool is_ad = false) {
    require_active(author);
    if (topic_tag.size() < 2 || topic_tag[0] != '#')
      throw SimError("topic tag must start with '#': '" + topic_tag + "'");
    Post p;
    p.id = state_.next_post_id;
    p.author = author;
    p.topic_tag = to_lower(topic_tag);
    p.body = body;
    p.media = std::move(media);
    p.tick = clock_;
    p.is_ad = is_ad;
    commit(is_ad ? EventType::AdPosted : EventType::PostPublished,
           {{"post", p.to_json()}});
    if (post_hook_) {
      if (auto reason = post_hook_(p))
        commit(EventType::PostRemoved, {{"post_id", p.id}, {"reason", *reason}});
    }
    return p.id;
  }

  std::int64_t publish_ad(const std::string& author, const std::string& topic_tag,
                          const std::string& body, std::vector<MediaAsset> media = {}) {
    return publish_post(author, topic_tag, body, std::move(media), /*is_ad=*/true);
  }

  // Idempotent: removing an already-removed post is a no-op with no event.
  bool remove_post(std::int64_t post_id, const std::string& reason) {
    const Post& p = require_post(post_id);
    if (p.removed) return false;
    commit(EventType::PostRemoved, {{"post_id", post_id}, {"reason", reason}});
    return true;
  }

  // Idempotent: banning a banned account is a no-op with no event.
  bool ban_account(const std::string& id, const std::string& reason) {
    auto it = state_.accounts.find(id);
    if (it == state_.accounts.end()) throw SimError("unknown account: " + id);
    if (it->second.banned) return false;
    commit(EventType::AccountBanned, {{"account", id}, {"reason", reason}});
    return true;
  }

  bool follow(const std::string& follower, const std::string& followee) {
    require_active(follower);
    if (!state_.accounts.count(followee)) throw SimError("unknown account: " + followee);
    if (follower == followee) throw SimError("account cannot follow itself");
    if (state_.accounts.at(follower).following.count(followee)) return false;
    commit(EventType::Followed, {{"follower", follower}, {"followee", followee}});
    return true;
  }

  void engage(const std::string& user, std::int64_t post_id, EngageKind kind) {
    require_active(user);
    const Post& p = require_post(post_id);
    if (p.removed) throw SimError("cannot engage removed post " + std::to_string(post_id));
    commit(EventType::Engaged,
           {{"account", user}, {"post_id", post_id}, {"kind", to_string(kind)}});
  }

  DmReceipt send_dm(const std::string& from, const std::string& to,
                    const std::string& body) {
    require_active(from);
    require_active(to);
    if (from == to) throw SimError("account cannot DM itself");
    DirectMessage d;
    d.id = state_.next_dm_id;
    d.from = from;
    d.to = to;
    d.body = body;
    d.tick = clock_;
    if (dm_hook_) {
      if (auto reason = dm_hook_(d)) {
        d.blocked = true;
        commit(EventType::DMBlocked, {{"dm", d.to_json()}, {"reason", *reason}});
        return {d.id, true};
      }
    }
    commit(EventType::DMSent, {{"dm", d.to_json()}});
    return {d.id, false};
  }

  void set_topic_subject(const std::string& topic_tag, const std::string& subject) {
    commit(EventType::TopicSubjectSet,
           {{"topic", to_lower(topic_tag)}, {"subject", subject}});
  }

  // -- queries ------------------------------------------------------------

  const Account* account(const std::string& id) const {
    auto it = state_.accounts.find(id);
    return it == state_.accounts.end() ? nullptr : &it->second;
  }

  const Post* post(std::int64_t id) const {
    auto it = state_.posts.find(id);
    return it == state_.posts.end() ? nullptr : &it->second;
  }

  // Non-removed posts in id order, optionally restricted to an author or a
  // topic tag.
  std::vector<const Post*> query_posts(PostQuery mode = PostQuery::all,
                                       const std::string& key = "") const {
    std::string want = to_lower(key);
    std::vector<const Post*> out;
    for (const auto& [id, p] : state_.posts) {
      (void)id;
      if (p.removed) continue;
      if (mode == PostQuery::by_author && p.author != key) continue;
      if (mode == PostQuery::by_topic && p.topic_tag != want) continue;
      out.push_back(&p);
    }
    return out;
  }

  // Most engaged non-removed posts, ties broken by older id.
  std::vector<const Post*> top_posts(std::size_t limit) const {
    std::vector<const Post*> out = query_posts();
    std::stable_sort(out.begin(), out.end(), [](const Post* a, const Post* b) {
      if (a->engagement != b->engagement) return a->engagement > b->engagement;
      return a->id < b->id;
    });
    if (out.size() > limit) out.resize(limit);
    return out;
  }

  // Topics ranked by recency-decayed engagement over the last `window`
  // ticks: sum of engagement x 0.9^age per non-removed post. Ties break
  // lexicographically.
  std::vector<std::pair<std::string, double>> trending_topics(Tick window) const {
    if (window < 1) throw SimError("trending window must be >= 1");
    std::map<std::string, double> score;
    for (const auto& [id, p] : state_.posts) {
      (void)id;
      if (p.removed) continue;
      Tick age = clock_ - p.tick;
      if (age < 0 || age >= window) continue;
      double decay = 1.0;
      for (Tick i = 0; i < age; ++i) decay *= 0.9;
      score[p.topic_tag] += static_cast<double>(p.engagement) * decay;
    }
    std::vector<std::pair<std::string, double>> rows(score.begin(), score.end());
    std::stable_sort(rows.begin(), rows.end(), [](const auto& a, const auto& b) {
      if (a.second != b.second) return a.second > b.second;
      return a.first < b.first;
    });
    return rows;
  }

  std::optional<std::string> topic_subject(const std::string& topic_tag) const {
    auto it = state_.topic_subjects.find(to_lower(topic_tag));
    if (it == state_.topic_subjects.end()) return std::nullopt;
    return it->second;
  }

  // Unblocked DMs addressed to `recipient`, oldest first.
  std::vector<const DirectMessage*> inbox(const std::string& recipient) const {
    std::vector<const DirectMessage*> out;
    auto it = state_.inbox_index.find(recipient);
    if (it == state_.inbox_index.end()) return out;
    out.reserve(it->second.size());
    for (std::size_t i : it->second) out.push_back(&state_.dms[i]);
    return out;
  }

  // Ads that are live and whose author is not banned: what a browsing user
  // can actually encounter.
  std::vector<const Post*> delivered_ads() const {
    std::vector<const Post*> out;
    for (const auto& [id, p] : state_.posts) {
      (void)id;
      if (!p.is_ad || p.removed) continue;
      auto acct = state_.accounts.find(p.author);
      if (acct != state_.accounts.end() && acct->second.banned) continue;
      out.push_back(&p);
    }
    return out;
  }

  std::vector<Engagement> engagements_of(const std::string& account) const {
    auto it = state_.engagements_by.find(account);
    return it == state_.engagements_by.end() ? std::vector<Engagement>{} : it->second;
  }

  // -- replay -------------------------------------------------------------

  // Applies one event to a state. Events outside the platform's vocabulary
  // (pipeline markers, chat turns, backend traces) are skipped, so a full
  // run log replays directly.
  static void apply(PlatformState& s, const SimEvent& e) {
    switch (e.type) {
      case EventType::AccountRegistered: {
        Account a = Account::from_json(e.payload.at("account"));
        s.accounts[a.id] = std::move(a);
        break;
      }
      case EventType::PostPublished:
      case EventType::AdPosted: {
        Post p = Post::from_json(e.payload.at("post"));
        s.next_post_id = std::max(s.next_post_id, p.id + 1);
        s.posts[p.id] = std::move(p);
        break;
      }
      case EventType::PostRemoved:
        s.posts.at(e.payload.at("post_id").get<std::int64_t>()).removed = true;
        break;
      case EventType::AccountBanned:
        s.accounts.at(e.payload.at("account").get<std::string>()).banned = true;
        break;
      case EventType::Followed: {
        const std::string follower = e.payload.at("follower").get<std::string>();
        const std::string followee = e.payload.at("followee").get<std::string>();
        s.accounts.at(follower).following.insert(followee);
        s.accounts.at(followee).followers.insert(follower);
        break;
      }
      case EventType::Engaged: {
        const std::string account = e.payload.at("account").get<std::string>();
        const auto post_id = e.payload.at("post_id").get<std::int64_t>();
        s.posts.at(post_id).engagement += 1;
        s.engagements_by[account].push_back(
            {post_id, engage_kind_from_string(e.payload.at("kind").get<std::string>())});
        break;
      }
      case EventType::TopicSubjectSet:
        s.topic_subjects[e.payload.at("topic").get<std::string>()] =
            e.payload.at("subject").get<std::string>();
        break;
      case EventType::DMSent:
      case EventType::DMBlocked: {
        DirectMessage d = DirectMessage::from_json(e.payload.at("dm"));
        s.next_dm_id = std::max(s.next_dm_id, d.id + 1);
        if (!d.blocked) s.inbox_index[d.to].push_back(s.dms.size());
        s.dms.push_back(std::move(d));
        break;
      }
      default:
        return;  // not a platform event; no state effect, no tick advance
    }
    s.tick = e.tick;
  }

  static PlatformState replay(const std::vector<SimEvent>& events) {
    PlatformState s;
    for (const auto& e : events) apply(s, e);
    return s;
  }

 private:
  void commit(EventType type, json payload) {
    const SimEvent& e = log_.append(clock_, type, std::move(payload));
    apply(state_, e);
  }

  void require_active(const std::string& id) const {
    auto it = state_.accounts.find(id);
    if (it == state_.accounts.end()) throw SimError("unknown account: " + id);
    if (it->second.banned) throw SimError("account is banned: " + id);
  }

  const Post& require_post(std::int64_t id) const {
    auto it = state_.posts.find(id);
    if (it == state_.posts.end()) throw SimError("unknown post: " + std::to_string(id));
    return it->second;
  }

  EventLog& log_;
  PlatformState state_;
  PostHook post_hook_;
  DmHook dm_hook_;
  Tick clock_ = 0;
};

}  // namespace shadowsim
