#include <catch2/catch_amalgamated.hpp>

#include "shadowsim/platform.hpp"
#include "support/oracles.hpp"

using namespace shadowsim;

namespace {

AccountProfile profile(const std::string& name) {
  AccountProfile p;
  p.name = name;
  p.bio = "bio of " + name;
  p.avatar_descriptor = "portrait of " + name;
  return p;
}

struct Fixture {
  EventLog log;
  Platform platform{log};

  Fixture() {
    platform.register_account(profile("alice"), AccountKind::benign);
    platform.register_account(profile("bob"), AccountKind::benign);
    platform.register_account(profile("eve"), AccountKind::perpetrator_disguise);
  }
};

}  // namespace

TEST_CASE("registration rules") {
  EventLog log;
  Platform platform(log);
  CHECK(platform.register_account(profile("alice"), AccountKind::benign) == "alice");
  CHECK_THROWS_AS(platform.register_account(profile("alice"), AccountKind::benign),
                  SimError);

  AccountProfile empty_name;
  empty_name.bio = "x";
  CHECK_THROWS_AS(platform.register_account(empty_name, AccountKind::benign), SimError);

  AccountProfile thin = profile("mallory");
  thin.bio = "";
  CHECK_THROWS_AS(platform.register_account(thin, AccountKind::perpetrator_disguise),
                  SimError);
  CHECK_NOTHROW(platform.register_account(thin, AccountKind::benign));

  CHECK(platform.account("alice")->kind == AccountKind::benign);
  CHECK(platform.account("missing") == nullptr);
}

TEST_CASE("posting requires a well-formed topic tag, stored lowercase") {
  Fixture f;
  std::int64_t id = f.platform.publish_post("alice", "#Dancing", "moves #Dancing");
  CHECK(f.platform.post(id)->topic_tag == "#dancing");
  CHECK_THROWS_AS(f.platform.publish_post("alice", "dancing", "x"), SimError);
  CHECK_THROWS_AS(f.platform.publish_post("alice", "#", "x"), SimError);
  CHECK_THROWS_AS(f.platform.publish_post("ghost", "#a", "x"), SimError);
}

TEST_CASE("engagement counts and per-account tracking") {
  Fixture f;
  std::int64_t id = f.platform.publish_post("alice", "#a", "hello");
  f.platform.engage("bob", id, EngageKind::like);
  f.platform.engage("eve", id, EngageKind::reply);
  CHECK(f.platform.post(id)->engagement == 2);
  REQUIRE(f.platform.engagements_of("bob").size() == 1);
  CHECK(f.platform.engagements_of("bob")[0].post_id == id);
  CHECK_THROWS_AS(f.platform.engage("bob", 999, EngageKind::like), SimError);

  f.platform.remove_post(id, "test");
  CHECK_THROWS_AS(f.platform.engage("bob", id, EngageKind::like), SimError);
}

TEST_CASE("ban and remove are idempotent") {
  Fixture f;
  std::int64_t id = f.platform.publish_post("alice", "#a", "hello");
  CHECK(f.platform.remove_post(id, "test"));
  CHECK_FALSE(f.platform.remove_post(id, "test"));
  CHECK(f.platform.post(id)->removed);

  CHECK(f.platform.ban_account("eve", "test"));
  CHECK_FALSE(f.platform.ban_account("eve", "test"));
  CHECK(f.platform.account("eve")->banned);
  std::size_t before = f.log.size();
  f.platform.ban_account("eve", "test");
  CHECK(f.log.size() == before);  // no-op emits nothing
}

TEST_CASE("banned accounts cannot act") {
  Fixture f;
  f.platform.ban_account("eve", "test");
  CHECK_THROWS_AS(f.platform.publish_post("eve", "#a", "x"), SimError);
  CHECK_THROWS_AS(f.platform.send_dm("eve", "alice", "hi"), SimError);
  CHECK_THROWS_AS(f.platform.send_dm("alice", "eve", "hi"), SimError);
  std::int64_t id = f.platform.publish_post("alice", "#a", "x");
  CHECK_THROWS_AS(f.platform.engage("eve", id, EngageKind::like), SimError);
}

TEST_CASE("following") {
  Fixture f;
  CHECK(f.platform.follow("alice", "bob"));
  CHECK_FALSE(f.platform.follow("alice", "bob"));  // duplicate is a no-op
  CHECK_THROWS_AS(f.platform.follow("alice", "alice"), SimError);
  CHECK_THROWS_AS(f.platform.follow("alice", "ghost"), SimError);
  CHECK(f.platform.account("alice")->following.count("bob") == 1);
  CHECK(f.platform.account("bob")->followers.count("alice") == 1);
}

TEST_CASE("dms deliver in order and self-dm is an error") {
  Fixture f;
  f.platform.send_dm("alice", "bob", "first");
  f.platform.send_dm("eve", "bob", "second");
  f.platform.send_dm("alice", "bob", "third");
  auto inbox = f.platform.inbox("bob");
  REQUIRE(inbox.size() == 3);
  CHECK(inbox[0]->body == "first");
  CHECK(inbox[2]->body == "third");
  CHECK_THROWS_AS(f.platform.send_dm("alice", "alice", "hi"), SimError);
}

TEST_CASE("dm hook blocks delivery and records the blocked message") {
  Fixture f;
  f.platform.set_dm_hook([](const DirectMessage& dm) -> std::optional<std::string> {
    if (dm.body.find("spam") != std::string::npos) return "looks like spam";
    return std::nullopt;
  });
  DmReceipt ok = f.platform.send_dm("alice", "bob", "hello");
  DmReceipt blocked = f.platform.send_dm("alice", "bob", "buy spam now");
  CHECK_FALSE(ok.blocked);
  CHECK(blocked.blocked);
  CHECK(f.platform.inbox("bob").size() == 1);

  bool saw_blocked_event = false;
  for (const auto& e : f.log.events())
    if (e.type == EventType::DMBlocked) {
      saw_blocked_event = true;
      CHECK(e.payload.at("reason") == "looks like spam");
    }
  CHECK(saw_blocked_event);
}

TEST_CASE("post hook removes the post after publication") {
  Fixture f;
  f.platform.set_post_hook([](const Post& p) -> std::optional<std::string> {
    if (p.body.find("offtopic") != std::string::npos) return "off the rails";
    return std::nullopt;
  });
  std::int64_t kept = f.platform.publish_post("alice", "#a", "fine content");
  std::int64_t removed = f.platform.publish_post("alice", "#a", "offtopic content");
  CHECK_FALSE(f.platform.post(kept)->removed);
  CHECK(f.platform.post(removed)->removed);
}

TEST_CASE("query_posts filters without reordering") {
  Fixture f;
  std::int64_t a = f.platform.publish_post("alice", "#x", "1");
  std::int64_t b = f.platform.publish_post("bob", "#y", "2");
  std::int64_t c = f.platform.publish_post("alice", "#y", "3");
  f.platform.remove_post(a, "test");

  auto all = f.platform.query_posts();
  REQUIRE(all.size() == 2);
  CHECK(all[0]->id == b);
  CHECK(all[1]->id == c);

  auto alice_posts = f.platform.query_posts(PostQuery::by_author, "alice");
  REQUIRE(alice_posts.size() == 1);
  CHECK(alice_posts[0]->id == c);

  CHECK(f.platform.query_posts(PostQuery::by_topic, "#Y").size() == 2);
}

TEST_CASE("trending decays engagement by topic age") {
  EventLog log;
  Platform platform(log);
  platform.register_account(profile("a"), AccountKind::benign);
  platform.register_account(profile("b"), AccountKind::benign);

  platform.set_tick(0);
  std::int64_t old_post = platform.publish_post("a", "#old", "x");
  platform.engage("b", old_post, EngageKind::like);
  platform.engage("b", old_post, EngageKind::like);

  platform.set_tick(3);
  std::int64_t fresh = platform.publish_post("a", "#fresh", "y");
  platform.engage("b", fresh, EngageKind::like);
  platform.engage("b", fresh, EngageKind::like);

  auto top = platform.trending_topics(10);
  REQUIRE(top.size() == 2);
  CHECK(top[0].first == "#fresh");
  CHECK(top[0].second == Catch::Approx(2.0));
  CHECK(top[1].first == "#old");
  CHECK(top[1].second == Catch::Approx(2.0 * 0.9 * 0.9 * 0.9));

  auto expected = oracle::trending({{"#old", 0, 2}, {"#fresh", 3, 2}}, 3, 10);
  REQUIRE(expected.size() == top.size());
  for (std::size_t i = 0; i < top.size(); ++i) {
    CHECK(top[i].first == expected[i].first);
    CHECK(top[i].second == Catch::Approx(expected[i].second));
  }

  // posts older than the window fall out entirely
  platform.set_tick(20);
  auto windowed = platform.trending_topics(5);
  CHECK(windowed.empty());
  CHECK_THROWS_AS(platform.trending_topics(0), SimError);
}

TEST_CASE("trending ties break lexicographically") {
  EventLog log;
  Platform platform(log);
  platform.register_account(profile("a"), AccountKind::benign);
  platform.register_account(profile("b"), AccountKind::benign);
  platform.set_tick(0);
  std::int64_t p1 = platform.publish_post("a", "#zeta", "x");
  std::int64_t p2 = platform.publish_post("a", "#alpha", "y");
  platform.engage("b", p1, EngageKind::like);
  platform.engage("b", p2, EngageKind::like);
  auto top = platform.trending_topics(5);
  REQUIRE(top.size() == 2);
  CHECK(top[0].first == "#alpha");
  CHECK(top[1].first == "#zeta");
}

TEST_CASE("replay reproduces the final state exactly") {
  Fixture f;
  f.platform.set_tick(0);
  std::int64_t id = f.platform.publish_post("alice", "#a", "post");
  f.platform.engage("bob", id, EngageKind::like);
  f.platform.follow("alice", "bob");
  f.platform.set_tick(2);
  f.platform.send_dm("alice", "bob", "hello");
  f.platform.publish_ad("eve", "#a", "ad body", {});
  f.platform.ban_account("eve", "test");
  f.platform.remove_post(id, "test");
  f.platform.set_topic_subject("#a", "subject text");

  PlatformState replayed = Platform::replay(f.log.events());
  CHECK(replayed == f.platform.state());

  // replay is pure: running it twice gives the same state
  CHECK(Platform::replay(f.log.events()) == replayed);
}

TEST_CASE("delivered ads exclude removed posts and banned authors") {
  Fixture f;
  std::int64_t ad1 = f.platform.publish_ad("eve", "#a", "buy", {});
  f.platform.publish_post("alice", "#a", "organic");
  auto ads = f.platform.delivered_ads();
  REQUIRE(ads.size() == 1);
  CHECK(ads[0]->id == ad1);

  f.platform.ban_account("eve", "test");
  CHECK(f.platform.delivered_ads().empty());
}

TEST_CASE("topic subjects are retrievable and case-normalized") {
  Fixture f;
  f.platform.set_topic_subject("#Dance", "all about dancing");
  REQUIRE(f.platform.topic_subject("#dance").has_value());
  CHECK(*f.platform.topic_subject("#dance") == "all about dancing");
  CHECK_FALSE(f.platform.topic_subject("#other").has_value());
}

TEST_CASE("set_tick cannot move backwards") {
  Fixture f;
  f.platform.set_tick(5);
  CHECK_THROWS_AS(f.platform.set_tick(4), SimError);
  CHECK_NOTHROW(f.platform.set_tick(5));
}
