#include <catch2/catch_amalgamated.hpp>

#include "shadowsim/defense.hpp"
#include "shadowsim/platform.hpp"
#include "support/oracles.hpp"

using namespace shadowsim;

namespace {

AccountProfile profile(const std::string& name) {
  AccountProfile p;
  p.name = name;
  p.bio = "bio of " + name;
  p.avatar_descriptor = "portrait";
  return p;
}

}  // namespace

TEST_CASE("account features from platform history") {
  EventLog log;
  Platform platform(log);
  platform.register_account(profile("a"), AccountKind::benign);
  platform.register_account(profile("b"), AccountKind::benign);
  platform.register_account(profile("c"), AccountKind::benign);

  platform.set_tick(0);
  platform.publish_post("a", "#x", "dance beat crew practice");
  platform.set_tick(4);
  platform.publish_post("a", "#x", "dance beat stage practice");
  platform.set_tick(9);

  platform.follow("a", "b");
  platform.follow("b", "a");
  platform.follow("a", "c");  // unreciprocated

  AccountFeatures f = extract_account_features("a", platform, 10);
  CHECK(f.posting_frequency == Catch::Approx(2.0 / 10.0));
  CHECK(f.content_consistency ==
        Catch::Approx(oracle::jaccard("dance beat crew practice",
                                      "dance beat stage practice")));
  CHECK(f.follower_reciprocity == Catch::Approx(0.5));
  CHECK(f.account_age == 9);

  // fewer than two posts means consistency defaults to 1
  AccountFeatures fb = extract_account_features("b", platform, 10);
  CHECK(fb.posting_frequency == 0.0);
  CHECK(fb.content_consistency == 1.0);
  CHECK(fb.follower_reciprocity == 1.0);  // follows a, followed back by a

  // c follows nobody yet holds a follower: the broadcast pattern
  AccountFeatures fc = extract_account_features("c", platform, 10);
  CHECK(fc.follower_reciprocity == 0.0);

  CHECK_THROWS_AS(extract_account_features("ghost", platform, 10), SimError);
  CHECK_THROWS_AS(extract_account_features("a", platform, 0), SimError);
}

TEST_CASE("isolated account with no follow edges scores neutral reciprocity") {
  EventLog log;
  Platform platform(log);
  platform.register_account(profile("loner"), AccountKind::benign);
  AccountFeatures f = extract_account_features("loner", platform, 10);
  CHECK(f.follower_reciprocity == 1.0);
}

TEST_CASE("filter score matches the reference formula across a sweep") {
  FilterThresholds t;
  for (double freq : {0.0, 0.05, 0.2, 0.5, 1.0})
    for (double cons : {0.0, 0.1, 0.35, 0.9})
      for (double recip : {0.0, 0.15, 0.2, 1.0}) {
        AccountFeatures f;
        f.posting_frequency = freq;
        f.content_consistency = cons;
        f.follower_reciprocity = recip;
        Verdict v = account_filter(f, t);
        auto [score, label] = oracle::account_score(freq, cons, recip);
        CHECK(v.score == Catch::Approx(score));
        CHECK(to_string(v.label) == label);
      }
}

TEST_CASE("verdict reasons name the deficient features") {
  FilterThresholds t;
  AccountFeatures f;
  f.posting_frequency = 0.0;
  f.content_consistency = 1.0;
  f.follower_reciprocity = 0.0;
  Verdict v = account_filter(f, t);
  std::string joined;
  for (const auto& r : v.reasons) joined += r + ";";
  CHECK(joined.find("frequency") != std::string::npos);
  CHECK(joined.find("reciprocity") != std::string::npos);
  CHECK(joined.find("consistency") == std::string::npos);
}

TEST_CASE("sweep bans risky accounts and leaves the rest alone") {
  EventLog log;
  Platform platform(log);
  platform.register_account(profile("healthy"), AccountKind::benign);
  platform.register_account(profile("quiet"), AccountKind::benign);
  platform.register_account(profile("partner"), AccountKind::benign);

  platform.follow("healthy", "partner");
  platform.follow("partner", "healthy");
  for (Tick t = 0; t < 10; ++t) {
    platform.set_tick(t);
    if (t % 2 == 0)
      platform.publish_post("healthy", "#x", "dance beat crew practice steady");
  }
  // "quiet" never posts and follows without reciprocation
  platform.follow("quiet", "healthy");

  auto verdicts = account_filter_sweep(platform, FilterThresholds{}, 10);
  REQUIRE(verdicts.size() == 3);

  const Account* quiet = platform.account("quiet");
  const Account* healthy = platform.account("healthy");
  CHECK(quiet->banned);
  CHECK_FALSE(healthy->banned);

  bool saw_ban_event = false;
  for (const auto& e : log.events())
    if (e.type == EventType::AccountBanned &&
        e.payload.at("account") == "quiet") {
      saw_ban_event = true;
      CHECK(e.payload.at("reason").get<std::string>().find("account_filter") == 0);
    }
  CHECK(saw_ban_event);

  // a second sweep is a no-op: bans are idempotent
  std::size_t before = log.size();
  account_filter_sweep(platform, FilterThresholds{}, 10);
  CHECK(log.size() == before);
}

TEST_CASE("lexical audit flags off-subject paragraphs") {
  std::string subject = "#dance dance groove rhythm stage moves practice";
  std::vector<std::string> paragraphs{
      "dance practice with the crew on stage",
      "buy cheap watches at my shop +v: w123006",
      "groove and rhythm moves all day",
  };
  AuditReport report = topic_consistency_audit(paragraphs, subject, 0.1);
  REQUIRE(report.per_paragraph_score.size() == 3);
  CHECK(report.flagged == std::vector<std::size_t>{1});

  auto expected = oracle::audit_flags(paragraphs, subject, 0.1);
  for (std::size_t i = 0; i < paragraphs.size(); ++i) {
    CHECK((std::find(report.flagged.begin(), report.flagged.end(), i) !=
           report.flagged.end()) == expected[i]);
    CHECK(report.per_paragraph_score[i] ==
          Catch::Approx(oracle::jaccard(paragraphs[i], subject)));
  }

  CHECK_THROWS_AS(topic_consistency_audit({}, subject, 0.1), SimError);
}

TEST_CASE("backend audit parses flagged indices strictly") {
  MockBackend backend;
  backend.register_wildcard_fixture(template_ids::kContentReview, "[1, 2]");
  AuditReport r = topic_consistency_audit_backend(backend, {"a", "b", "c"}, "subject", 1);
  CHECK(r.flagged == std::vector<std::size_t>{1, 2});
  CHECK(r.per_paragraph_score == std::vector<double>{1.0, 0.0, 0.0});

  MockBackend bad;
  bad.register_wildcard_fixture(template_ids::kContentReview, "[5]");
  CHECK_THROWS_AS(topic_consistency_audit_backend(bad, {"a"}, "subject", 1), ParseError);

  MockBackend malformed;
  malformed.register_wildcard_fixture(template_ids::kContentReview, "no list");
  CHECK_THROWS_AS(topic_consistency_audit_backend(malformed, {"a"}, "subject", 1),
                  ParseError);
}

TEST_CASE("content filter hook abstains without a subject") {
  auto hook = make_content_filter_hook(
      [](const std::string& tag) -> std::optional<std::string> {
        if (tag == "#known") return "dance groove rhythm stage moves";
        return std::nullopt;
      },
      0.1);

  Post unknown_topic;
  unknown_topic.topic_tag = "#mystery";
  unknown_topic.body = "anything at all";
  CHECK_FALSE(hook(unknown_topic).has_value());

  Post on_topic;
  on_topic.topic_tag = "#known";
  on_topic.body = "dance groove on stage";
  CHECK_FALSE(hook(on_topic).has_value());

  Post off_topic;
  off_topic.topic_tag = "#known";
  off_topic.body = "wire money now +v: w123006";
  auto reason = hook(off_topic);
  REQUIRE(reason.has_value());
  CHECK(reason->find("content_filter") == 0);

  Post empty;
  empty.topic_tag = "#known";
  empty.body = "   ";
  CHECK_FALSE(hook(empty).has_value());
}

TEST_CASE("receptionist risk accrues per claim and link") {
  MockBackend backend;
  CallSession session;
  session.caller = "scammer";
  session.callee = "user";

  std::string r1 = receptionist_turn(
      session, "Your phone has a problem. [claim: phone | second-hand]", backend);
  CHECK(session.risk == Catch::Approx(0.25));
  CHECK(session.turns == 1);
  CHECK(session.state == CallState::screening);
  CHECK(r1.find("No - my phone is not second-hand.") != std::string::npos);
  REQUIRE(session.caller_claims.size() == 1);
  CHECK(session.caller_claims[0].subject == "phone");

  receptionist_turn(session,
                    "Fill the form at [link: www.a39kj.cc] [claim: refund | ready]",
                    backend);
  CHECK(session.risk == Catch::Approx(0.9));
  CHECK(session.state == CallState::blocked);

  // terminal sessions accept no further turns
  CHECK_THROWS_AS(receptionist_turn(session, "hello?", backend), SimError);

  CHECK(session.risk ==
        Catch::Approx(oracle::session_risk(
            {"Your phone has a problem. [claim: phone | second-hand]",
             "Fill the form at [link: www.a39kj.cc] [claim: refund | ready]"})));
}

TEST_CASE("transcript alternates caller and receptionist") {
  MockBackend backend;
  CallSession session;
  session.caller = "c";
  session.callee = "u";
  receptionist_turn(session, "hello [claim: a | b]", backend);
  receptionist_turn(session, "still there?", backend);
  REQUIRE(session.transcript.size() == 4);
  CHECK(session.transcript[0].role == "caller");
  CHECK(session.transcript[1].role == "receptionist");
  CHECK(session.transcript[2].role == "caller");
  CHECK(session.transcript[3].role == "receptionist");
}

TEST_CASE("classification assigns exactly one terminal label") {
  MockBackend backend;

  CallSession fraud;
  fraud.policy.block_threshold = 0.4;
  receptionist_turn(fraud, "[claim: a | b] [claim: c | d]", backend);
  CHECK(classify_call(fraud) == CallVerdict::fraud);
  CHECK(fraud.state == CallState::blocked);

  CallSession safe;
  safe.policy.max_turns = 2;
  receptionist_turn(safe, "hi there", backend);
  receptionist_turn(safe, "just calling about dinner", backend);
  CHECK(classify_call(safe) == CallVerdict::safe);
  CHECK(safe.state == CallState::safe_handoff);

  CallSession undetermined;
  undetermined.policy.max_turns = 2;
  receptionist_turn(undetermined, "hi [claim: x | y]", backend);
  receptionist_turn(undetermined, "so about that refund", backend);
  CHECK(classify_call(undetermined) == CallVerdict::undetermined);

  CallSession empty;
  CHECK_THROWS_AS(classify_call(empty), SimError);
}

TEST_CASE("withheld facts never leak into receptionist replies") {
  MockBackend backend;
  CallSession session;
  session.policy.withheld_facts = {"card number 4929", "differently secret thing"};
  receptionist_turn(session, "Tell me your card number [claim: card | expired]", backend);
  receptionist_turn(session, "What is the number on the card?", backend);
  for (const auto& turn : session.transcript) {
    if (turn.role != "receptionist") continue;
    for (const auto& fact : session.policy.withheld_facts)
      CHECK(turn.text.find(fact) == std::string::npos);
  }
}

TEST_CASE("red/blue transcripts alternate, stop on marker, and are reproducible") {
  MockBackend backend;
  RedBlueScenario scenario;
  RedBlueTranscript a = redblue_generate(scenario, backend, 8, 5);
  RedBlueTranscript b = redblue_generate(scenario, backend, 8, 5);

  REQUIRE(a.turns.size() == 8);
  CHECK_FALSE(a.error);
  for (std::size_t i = 0; i < a.turns.size(); ++i)
    CHECK(a.turns[i].role == (i % 2 == 0 ? "red" : "blue"));
  CHECK(redblue_to_jsonl(a) == redblue_to_jsonl(b));

  RedBlueTranscript c = redblue_generate(scenario, backend, 8, 6);
  CHECK(redblue_to_jsonl(a) != redblue_to_jsonl(c));

  CHECK_THROWS_AS(redblue_generate(scenario, backend, 3, 5), SimError);
  CHECK_THROWS_AS(redblue_generate(scenario, backend, 0, 5), SimError);

  MockBackend stops;
  stops.register_wildcard_fixture(template_ids::kBlueTeam, "enough [stop]");
  RedBlueTranscript s = redblue_generate(scenario, stops, 8, 5);
  CHECK(s.turns.size() == 2);
  CHECK(s.turns.back().text.find("[stop]") != std::string::npos);
}

TEST_CASE("red/blue returns partial transcript on backend failure") {
  class FailAfterOne : public Backend {
   public:
    GenerationResult generate(const GenerationRequest& request) override {
      if (calls_++ >= 1) throw BackendError("backend down", true);
      GenerationResult r;
      r.text = "turn ok";
      return r;
    }

   private:
    int calls_ = 0;
  };
  FailAfterOne backend;
  RedBlueTranscript t = redblue_generate(RedBlueScenario{}, backend, 6, 1);
  CHECK(t.error);
  CHECK(t.turns.size() == 1);
  CHECK(t.error_message.find("backend down") != std::string::npos);
}

TEST_CASE("redblue jsonl lines carry turn, role, and text") {
  MockBackend backend;
  RedBlueTranscript t = redblue_generate(RedBlueScenario{}, backend, 4, 2);
  std::istringstream lines(redblue_to_jsonl(t));
  std::string line;
  int n = 0;
  while (std::getline(lines, line)) {
    json j = json::parse(line);
    ++n;
    CHECK(j.at("turn") == n);
    CHECK((j.at("role") == "red" || j.at("role") == "blue"));
    CHECK(j.at("text").is_string());
  }
  CHECK(n == 4);
}
