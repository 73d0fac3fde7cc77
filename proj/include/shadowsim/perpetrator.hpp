#pragma once

#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "shadowsim/cards.hpp"
#include "shadowsim/platform.hpp"

namespace shadowsim {

// ---------------------------------------------------------------------------
// Pipeline types
// ---------------------------------------------------------------------------

enum class PipelineStage { data_processing, account_prep, advertise, engage, chat_loop, done };

inline std::string to_string(PipelineStage s) {
  switch (s) {
    case PipelineStage::data_processing: return "data_processing";
    case PipelineStage::account_prep: return "account_prep";
    case PipelineStage::advertise: return "advertise";
    case PipelineStage::engage: return "engage";
    case PipelineStage::chat_loop: return "chat_loop";
    case PipelineStage::done: return "done";
  }
  throw SimError("unreachable pipeline stage");
}

inline PipelineStage pipeline_stage_from_string(const std::string& s) {
  if (s == "data_processing") return PipelineStage::data_processing;
  if (s == "account_prep") return PipelineStage::account_prep;
  if (s == "advertise") return PipelineStage::advertise;
  if (s == "engage") return PipelineStage::engage;
  if (s == "chat_loop") return PipelineStage::chat_loop;
  if (s == "done") return PipelineStage::done;
  throw SimError("unknown pipeline stage: " + s);
}

struct BotPersona {
  std::string speaking_style;
  json persona_attributes = json::object();  // e.g. {"attributes": [...]}
  std::string source_card_digest;

  std::vector<std::string> attribute_values() const {
    std::vector<std::string> out;
    for (const auto& [k, v] : persona_attributes.items()) {
      (void)k;
      if (v.is_string()) {
        out.push_back(v.get<std::string>());
      } else if (v.is_array()) {
        for (const auto& item : v)
          if (item.is_string()) out.push_back(item.get<std::string>());
      }
    }
    return out;
  }

  json to_json() const {
    json j = persona_attributes;
    j["speaking_style"] = speaking_style;
    return j;
  }
};

struct TargetPromotion {
  std::string payload;  // the contact handle / URL being pushed
  std::string goal_note;
};

inline std::string card_digest(const VictimCard& card) {
  return to_hex16(fnv1a64(card.data.dump()));
}

// The marker a chat message carries when the agent asks for money.
inline constexpr const char* kTransferRequestMarker = "[transfer_request]";

// ---------------------------------------------------------------------------
// Scripted data acquisition (no backend involved)
// ---------------------------------------------------------------------------

// Public text trail of one account: bio, own post bodies with media captions
// spliced in, and the bodies of liked posts. Deterministic order.
inline std::vector<std::string> acquire_victim_info(const std::string& victim_id,
                                                    const Platform& platform) {
  const Account* acct = platform.account(victim_id);
  if (!acct) throw SimError("unknown victim account: " + victim_id);

  std::vector<std::string> blobs;
  blobs.push_back(acct->bio);
  for (const Post* p : platform.query_posts(PostQuery::by_author, victim_id)) {
    std::string blob = p->body;
    for (const auto& m : p->media)
      if (m.caption) blob += " caption: " + caption_asset(m);
    blobs.push_back(blob);
  }
  for (const Engagement& e : platform.engagements_of(victim_id)) {
    if (e.kind != EngageKind::like) continue;
    const Post* p = platform.post(e.post_id);
    if (p && !p->removed) blobs.push_back(p->body);
  }
  return blobs;
}

// Groups the public records of accounts whose visible text matches any of
// the interest tokens. The matched token becomes the group tag and is
// stamped into the record so downstream card building can cluster on it.
inline std::map<std::string, std::vector<std::string>> segment_potential_victims(
    const Platform& platform, const std::vector<std::string>& interest_tokens,
    const std::set<std::string>& exclude_ids = {}) {
  std::map<std::string, std::vector<std::string>> groups;
  for (const auto& [id, acct] : platform.state().accounts) {
    if (acct.banned || exclude_ids.count(id)) continue;

    std::string visible = acct.bio;
    for (const Post* p : platform.query_posts(PostQuery::by_author, id)) {
      visible += '\n' + p->body;
      for (const auto& m : p->media)
        if (m.caption) visible += " caption: " + caption_asset(m);
    }
    auto tokens = token_set(visible);

    std::string matched;
    for (const auto& want : interest_tokens) {
      bool hit = true;
      for (const auto& t : tokenize(want))
        if (!tokens.count(t)) hit = false;
      if (hit && !tokenize(want).empty()) {
        matched = want;
        break;
      }
    }
    if (matched.empty()) continue;

    std::string record = "user: " + id + "\ngroup: " + matched + "\nbio: " + acct.bio + "\n";
    for (const Post* p : platform.query_posts(PostQuery::by_author, id)) {
      record += "post: " + p->body;
      for (const auto& m : p->media)
        if (m.caption) record += " caption: " + caption_asset(m);
      record += '\n';
    }
    for (const auto& followee : acct.following) {
      const Account* f = platform.account(followee);
      if (f && !f->bio.empty()) record += "follows: " + f->bio + '\n';
    }
    groups[matched].push_back(record);
  }
  return groups;
}

// Picks the promotion topic from summarized candidates. The reply must name
// a known tag (case-insensitive); the match is returned in the candidate's
// original casing. Anything else is a parse error listing the candidates.
inline std::string select_promotion_topic(
    Backend& backend, const std::string& promotion_info,
    const std::vector<std::pair<std::string, std::string>>& topics,
    std::uint64_t seed) {
  if (topics.empty()) throw SimError("no topic subjects to select from");
  std::string topics_text;
  for (const auto& [tag, subject] : topics) topics_text += tag + ": " + subject + "\n";

  GenerationRequest request;
  request.template_id = template_ids::kTopicSelect;
  request.bindings = {{"target_promotion_info", promotion_info}, {"topics", topics_text}};
  request.seed = seed;
  GenerationResult result = backend.generate(request);

  for (const auto& tok : tokenize(result.text)) {
    if (tok.size() < 2 || tok[0] != '#') continue;
    for (const auto& [tag, subject] : topics)
      if (to_lower(tag) == tok) return tag;
  }
  std::string candidates;
  for (const auto& [tag, subject] : topics) candidates += " " + tag;
  throw ParseError("topic selection named no known tag; candidates:" + candidates,
                   result.text);
}

// ---------------------------------------------------------------------------
// Perpetrator agent
// ---------------------------------------------------------------------------

struct PerpetratorConfig {
  int actions_per_tick = 4;
  int camouflage_posts = 3;   // per disguise account
  int ad_quota = 2;           // ads per agent
  int style_sample_posts = 4;
  int topic_count = 3;        // topics to summarize
  Tick trending_window = 20;
  int topic_posts_sample = 5;
  int trust_probe_turn = 6;   // chat turn that carries the transfer request
  int max_chat_turns = 12;
  int chat_context_window = 12;  // trailing messages kept in chat prompts
  std::vector<std::string> interest_tokens;  // victim segmentation predicate
  std::string demonstrations;                // few-shot card examples
  TargetPromotion promotion;
  CardSchema group_schema;
  CardSchema victim_schema;
};

class Perpetrator {
 public:
  // Per-victim conversation state.
  struct Thread {
    std::string disguise_account;
    VictimCard card;
    BotPersona persona;
    ChatHistory history;
    std::vector<std::string> pending;  // inbound messages not yet answered
    int turns = 0;
    bool transfer_requested = false;
    bool finished = false;
    std::int64_t last_seen_dm = -1;
  };

  Perpetrator(std::string id, std::uint64_t seed, PerpetratorConfig config,
              Backend& backend, Platform& platform, EventLog& log)
      : id_(std::move(id)),
        seed_(seed),
        config_(std::move(config)),
        backend_(backend),
        platform_(platform),
        log_(log) {
    if (trim(config_.promotion.payload).empty())
      throw ConfigError("promotion payload must be non-empty");
  }

  // -- inspection ---------------------------------------------------------

  const std::string& id() const { return id_; }
  PipelineStage stage() const { return stage_; }
  const std::string& platform_style() const { return platform_style_; }
  const std::map<std::string, std::string>& topic_subjects() const {
    return topic_subjects_;
  }
  const std::vector<GroupProfileCard>& group_cards() const { return group_cards_; }
  const std::map<std::size_t, std::string>& disguise_accounts() const {
    return disguise_accounts_;
  }
  const std::map<std::string, Thread>& threads() const { return threads_; }
  const std::string& selected_topic() const { return selected_topic_; }
  bool owns_account(const std::string& account_id) const {
    for (const auto& [idx, acct] : disguise_accounts_)
      if (acct == account_id) return true;
    return false;
  }

  // -- pipeline operations --------------------------------------------------

  std::string summarize_platform_style(const std::vector<const Post*>& posts) {
    if (posts.empty()) throw SimError("style summary needs at least one post");
    GenerationRequest request;
    request.template_id = template_ids::kPlatformStyle;
    request.bindings = {{"posts_content", numbered_posts(posts)}};
    request.seed = seed_;
    platform_style_ = backend_.generate(request).text;
    return platform_style_;
  }

  std::string summarize_topic(const std::string& topic_tag,
                              const std::vector<const Post*>& posts) {
    if (posts.empty()) throw SimError("topic summary needs at least one post");
    for (const Post* p : posts)
      if (p->topic_tag != to_lower(topic_tag))
        throw SimError("topic summary got a post tagged " + p->topic_tag +
                       ", expected " + to_lower(topic_tag));
    GenerationRequest request;
    request.template_id = template_ids::kTopicSubject;
    request.bindings = {{"topic", to_lower(topic_tag)},
                        {"posts_content", numbered_posts(posts)}};
    request.seed = seed_;
    std::string subject = backend_.generate(request).text;
    topic_subjects_[to_lower(topic_tag)] = subject;
    return subject;
  }

  std::vector<GroupProfileCard> build_group_cards(const std::string& user_records) {
    group_cards_ = build_group_profile_cards(backend_, user_records, config_.group_schema,
                                             config_.demonstrations, seed_);
    return group_cards_;
  }

  // Registers one disguise account per group card and publishes its
  // camouflage posts. A duplicate handle is retried once with a suffix.
  std::map<std::size_t, std::string> prepare_accounts() {
    for (std::size_t i = 0; i < group_cards_.size(); ++i) {
      if (!disguise_accounts_.count(i)) register_disguise_account(i);
      while (camouflage_published_[i] < config_.camouflage_posts)
        publish_camouflage_post(i);
    }
    return disguise_accounts_;
  }

  AccountProfile generate_account_profile(const GroupProfileCard& card) {
    GenerationRequest request;
    request.template_id = template_ids::kAccountProfile;
    request.bindings = {{"group_profile_cards", card.data.dump()},
                        {"demonstrations", config_.demonstrations}};
    request.seed = seed_;
    GenerationResult result = backend_.generate(request);
    json parsed = parse_structured(result, StructuredKind::json_object);

    AccountProfile profile;
    profile.name = field_text(parsed, "name", result.text);
    profile.bio = field_text(parsed, "bio", result.text);
    profile.avatar_descriptor =
        field_text(parsed, "midjourney descriptors for avatar images", result.text);
    return profile;
  }

  std::string register_disguise_account(std::size_t group_index) {
    if (group_index >= group_cards_.size())
      throw SimError("no group card at index " + std::to_string(group_index));
    AccountProfile profile = generate_account_profile(group_cards_[group_index]);
    try {
      disguise_accounts_[group_index] =
          platform_.register_account(profile, AccountKind::perpetrator_disguise);
    } catch (const SimError&) {
      profile.name += "_" + std::to_string(group_index + 2);
      disguise_accounts_[group_index] =
          platform_.register_account(profile, AccountKind::perpetrator_disguise);
    }
    return disguise_accounts_[group_index];
  }

  std::int64_t publish_camouflage_post(std::size_t group_index) {
    const std::string& account = disguise_accounts_.at(group_index);
    const GroupProfileCard& card = group_cards_.at(group_index);

    GenerationRequest request;
    request.template_id = template_ids::kCamouflagePost;
    request.bindings = {{"platform_style", platform_style_},
                        {"account_profile", account_profile_json(group_index)},
                        {"group_profile_card", card.data.dump()}};
    request.seed = seed_ + static_cast<std::uint64_t>(camouflage_published_[group_index]);
    std::string body = backend_.generate(request).text;

    std::string tag = camouflage_topic(card);
    std::int64_t post_id = platform_.publish_post(account, tag, body + " " + tag);
    camouflage_published_[group_index] += 1;
    return post_id;
  }

  // Picks the promotion topic from the summarized candidates. The reply must
  // name a known tag; anything else is a parse error listing the candidates.
  std::string select_topic() {
    std::vector<std::pair<std::string, std::string>> topics(topic_subjects_.begin(),
                                                            topic_subjects_.end());
    selected_topic_ = select_promotion_topic(backend_, promotion_text(), topics, seed_);
    return selected_topic_;
  }

  std::int64_t publish_ad_post() {
    if (selected_topic_.empty()) throw SimError("no topic selected for advertising");
    const std::string& account = first_disguise_account();

    GenerationRequest request;
    request.template_id = template_ids::kAdPost;
    request.bindings = {{"platform_style", platform_style_},
                        {"subject_content", topic_subjects_.at(selected_topic_)}};
    request.seed = seed_ + 1000 + static_cast<std::uint64_t>(ads_published_);
    std::string body = backend_.generate(request).text + " " + selected_topic_;
    if (body.find(config_.promotion.payload) == std::string::npos)
      body += "\nContact me: " + config_.promotion.payload;

    std::int64_t post_id = platform_.publish_ad(account, selected_topic_, body);
    ads_published_ += 1;
    return post_id;
  }

  VictimCard structure_card(const std::string& victim_id) {
    std::vector<std::string> blobs = acquire_victim_info(victim_id, platform_);
    return structure_victim_card(backend_, blobs, config_.victim_schema, seed_);
  }

  BotPersona design_persona(const VictimCard& card) {
    GenerationRequest request;
    request.template_id = template_ids::kPersona;
    request.bindings = {{"victim_card", card.data.dump()}};
    request.seed = seed_;
    GenerationResult result = backend_.generate(request);
    json parsed = parse_structured(result, StructuredKind::json_object);

    BotPersona persona;
    persona.speaking_style = field_text(parsed, "speaking_style", result.text);
    parsed.erase("speaking_style");
    persona.persona_attributes = parsed;
    persona.source_card_digest = card_digest(card);
    return persona;
  }

  // One conversational exchange with a victim. The reply is generated from
  // (persona, card, history + the incoming message); the stored history
  // records the agent's message first, keeping it perpetrator-led and
  // strictly alternating. At the trust-probe turn the outgoing message
  // carries the transfer-request marker exactly once.
  std::string chat_turn(const std::string& victim_id, const std::string& incoming) {
    auto it = threads_.find(victim_id);
    if (it == threads_.end() || it->second.persona.source_card_digest.empty())
      throw SimError("no persona prepared for victim " + victim_id);
    Thread& thread = it->second;

    GenerationRequest request;
    request.template_id = template_ids::kChatReply;
    request.bindings = {
        {"persona", thread.persona.to_json().dump()},
        {"victim_card", thread.card.data.dump()},
        {"chat_history",
         render_chat_history(thread.history,
                             static_cast<std::size_t>(config_.chat_context_window)) +
             "victim: " + incoming + "\n"}};
    request.seed = seed_ + static_cast<std::uint64_t>(thread.turns);
    std::string outgoing = backend_.generate(request).text;

    thread.turns += 1;
    if (thread.turns == config_.trust_probe_turn && !thread.transfer_requested) {
      outgoing += " ";
      outgoing += kTransferRequestMarker;
      thread.transfer_requested = true;
      log_.append(platform_.tick(), EventType::TransferRequest,
                  {{"perpetrator", id_},
                   {"victim", victim_id},
                   {"account", thread.disguise_account},
                   {"turn", thread.turns}});
    }

    thread.history.push_back({"perpetrator", outgoing});
    thread.history.push_back({"victim", incoming});
    log_.append(platform_.tick(), EventType::ChatTurn,
                {{"perpetrator", id_},
                 {"victim", victim_id},
                 {"account", thread.disguise_account},
                 {"incoming", incoming},
                 {"outgoing", outgoing},
                 {"turn", thread.turns}});
    return outgoing;
  }

  // Rereads the conversation for new facts; a changed card refreshes the
  // persona and earns one consistency post aimed at the victim's interests.
  VictimCard update_after_feedback(const std::string& victim_id) {
    Thread& thread = threads_.at(victim_id);
    if (thread.history.empty())
      throw SimError("no chat history to update from for " + victim_id);

    ChatHistory recent = thread.history;
    auto window = static_cast<std::size_t>(config_.chat_context_window);
    if (recent.size() > window)
      recent.erase(recent.begin(), recent.end() - static_cast<std::ptrdiff_t>(window));
    CardDelta delta = extract_delta_from_chat(backend_, thread.card, recent, seed_);
    Validation v = validate_delta(delta, config_.victim_schema);
    if (!v.ok) throw ParseError("chat delta failed validation: " + v.issues.front(),
                                delta.dump());

    VictimCard merged = merge_delta(thread.card, delta);
    if (merged == thread.card) return thread.card;

    thread.card = merged;
    thread.persona = design_persona(thread.card);
    log_.append(platform_.tick(), EventType::CardUpdated,
                {{"perpetrator", id_},
                 {"victim", victim_id},
                 {"delta", delta},
                 {"card", merged.data}});
    publish_consistency_post(thread);
    return thread.card;
  }

  // -- the tick-driven state machine -----------------------------------

  // Runs up to actions_per_tick units of stage work. Returns the number of
  // actions spent. Failures are logged as Error events and retried on later
  // ticks, up to three attempts per work item.
  int step() {
    if (stage_ == PipelineStage::done) throw SimError("agent " + id_ + " is done");
    if (!announced_) {
      enter_stage(stage_);
      announced_ = true;
    }
    budget_ = config_.actions_per_tick;
    switch (stage_) {
      case PipelineStage::data_processing: step_data_processing(); break;
      case PipelineStage::account_prep: step_account_prep(); break;
      case PipelineStage::advertise: step_advertise(); break;
      case PipelineStage::engage:
      case PipelineStage::chat_loop: step_chat(); break;
      case PipelineStage::done: break;
    }
    return config_.actions_per_tick - budget_;
  }

 private:
  // -- stage drivers ----------------------------------------------------

  void step_data_processing() {
    if (platform_style_.empty() && budget_ > 0) {
      auto posts = platform_.top_posts(static_cast<std::size_t>(config_.style_sample_posts));
      if (!posts.empty())
        attempt("style", [&] { summarize_platform_style(posts); });
    }
    if (budget_ > 0 && static_cast<int>(topic_subjects_.size()) < config_.topic_count) {
      for (const auto& [tag, score] : platform_.trending_topics(config_.trending_window)) {
        (void)score;
        if (budget_ <= 0) break;
        if (static_cast<int>(topic_subjects_.size()) >= config_.topic_count) break;
        if (topic_subjects_.count(tag) || abandoned("topic:" + tag)) continue;
        auto posts = platform_.query_posts(PostQuery::by_topic, tag);
        if (posts.size() > static_cast<std::size_t>(config_.topic_posts_sample))
          posts.erase(posts.begin(),
                      posts.end() - config_.topic_posts_sample);
        if (posts.empty()) continue;
        attempt("topic:" + tag, [&] { summarize_topic(tag, posts); });
      }
    }
    if (budget_ > 0 && group_cards_.empty() && !abandoned("group_cards")) {
      auto groups = segment_potential_victims(platform_, config_.interest_tokens,
                                              own_accounts());
      if (!groups.empty()) {
        std::string records;
        for (const auto& [tag, members] : groups) {
          (void)tag;
          for (const auto& r : members) records += r + "\n";
        }
        attempt("group_cards", [&] { build_group_cards(records); });
      }
    }
    if (!platform_style_.empty() && !topic_subjects_.empty() && !group_cards_.empty())
      advance(PipelineStage::account_prep);
  }

  void step_account_prep() {
    for (std::size_t i = 0; i < group_cards_.size(); ++i) {
      if (budget_ <= 0) return;
      if (!disguise_accounts_.count(i)) {
        if (abandoned("account:" + std::to_string(i))) continue;
        attempt("account:" + std::to_string(i), [&] { register_disguise_account(i); });
        if (budget_ <= 0) return;
      }
      while (disguise_accounts_.count(i) &&
             camouflage_published_[i] < config_.camouflage_posts && budget_ > 0) {
        attempt("camouflage:" + std::to_string(i),
                [&] { publish_camouflage_post(i); });
        if (abandoned("camouflage:" + std::to_string(i))) break;
      }
    }
    bool ready = true;
    for (std::size_t i = 0; i < group_cards_.size(); ++i) {
      if (!disguise_accounts_.count(i) && !abandoned("account:" + std::to_string(i)))
        ready = false;
      else if (disguise_accounts_.count(i) &&
               camouflage_published_[i] < config_.camouflage_posts &&
               !abandoned("camouflage:" + std::to_string(i)))
        ready = false;
    }
    if (ready) advance(PipelineStage::advertise);
  }

  void step_advertise() {
    if (disguise_accounts_.empty()) return;  // nowhere to post from; stall
    if (selected_topic_.empty()) {
      if (budget_ <= 0 || abandoned("select_topic")) return;
      attempt("select_topic", [&] { select_topic(); });
      if (selected_topic_.empty()) return;
    }
    while (ads_published_ < config_.ad_quota && budget_ > 0 && !abandoned("ad")) {
      attempt("ad", [&] { publish_ad_post(); });
    }
    if (ads_published_ >= config_.ad_quota || abandoned("ad"))
      advance(PipelineStage::engage);
  }

  // Engage and ChatLoop share a driver: watch the disguise inboxes, open a
  // thread per new correspondent, keep every open thread moving.
  void step_chat() {
    scan_inboxes();

    for (auto& [victim_id, thread] : threads_) {
      if (budget_ <= 0) return;
      if (thread.finished) continue;

      // new correspondent: build card and persona before any reply
      if (thread.persona.source_card_digest.empty()) {
        if (abandoned("card:" + victim_id)) {
          thread.finished = true;
          continue;
        }
        attempt("card:" + victim_id, [&] {
          thread.card = structure_card(victim_id);
          thread.persona = design_persona(thread.card);
        });
        if (thread.persona.source_card_digest.empty()) continue;
        if (stage_ == PipelineStage::engage) advance(PipelineStage::chat_loop);
      }

      while (!thread.pending.empty() && budget_ > 0 && !thread.finished) {
        std::string incoming = thread.pending.front();
        bool ok = attempt("chat:" + victim_id, [&] {
          std::string outgoing = chat_turn(victim_id, incoming);
          DmReceipt receipt =
              platform_.send_dm(thread.disguise_account, victim_id, outgoing);
          if (receipt.blocked) thread.finished = true;  // screened out; drop contact
        });
        if (!ok && !abandoned("chat:" + victim_id)) break;
        thread.pending.erase(thread.pending.begin());
        if (abandoned("chat:" + victim_id)) {
          thread.finished = true;
          break;
        }
        if (budget_ > 0 && !thread.finished && !abandoned("update:" + victim_id))
          attempt("update:" + victim_id, [&] { update_after_feedback(victim_id); });
        if (thread.turns >= config_.max_chat_turns) thread.finished = true;
      }
    }

    if (stage_ == PipelineStage::chat_loop && all_threads_finished() &&
        ads_published_ >= config_.ad_quota)
      advance(PipelineStage::done);
  }

  // Opens threads for first-time correspondents and queues new messages on
  // existing ones. Victims write to the disguise accounts by DM.
  void scan_inboxes() {
    for (const auto& [idx, account] : disguise_accounts_) {
      (void)idx;
      const Account* acct = platform_.account(account);
      if (!acct || acct->banned) continue;
      for (const DirectMessage* dm : platform_.inbox(account)) {
        if (dm->from == account) continue;
        auto [it, fresh] = threads_.try_emplace(dm->from);
        Thread& thread = it->second;
        if (fresh) {
          thread.disguise_account = account;
          thread.last_seen_dm = -1;
        }
        if (dm->id <= thread.last_seen_dm) continue;
        thread.last_seen_dm = dm->id;
        if (!thread.finished) thread.pending.push_back(dm->body);
      }
    }
  }

  bool all_threads_finished() const {
    if (threads_.empty()) return false;
    for (const auto& [v, t] : threads_) {
      (void)v;
      if (!t.finished || !t.pending.empty()) return false;
    }
    return true;
  }

  // -- bookkeeping --------------------------------------------------------

  void advance(PipelineStage next) {
    stage_ = next;
    enter_stage(next);
  }

  void enter_stage(PipelineStage s) {
    log_.append(platform_.tick(), EventType::StageEntered,
                {{"agent", id_}, {"stage", to_string(s)}});
  }

  // Runs one unit of work, spending budget even on failure so a hot error
  // cannot spin inside one tick. Three strikes abandon the item.
  template <typename Fn>
  bool attempt(const std::string& item, Fn&& fn) {
    budget_ -= 1;
    try {
      fn();
      attempts_.erase(item);
      return true;
    } catch (const std::exception& ex) {
      int n = ++attempts_[item];
      log_.append(platform_.tick(), EventType::Error,
                  {{"agent", id_}, {"item", item}, {"error", ex.what()}, {"attempt", n}});
      return false;
    }
  }

  bool abandoned(const std::string& item) const {
    auto it = attempts_.find(item);
    return it != attempts_.end() && it->second >= 3;
  }

  std::set<std::string> own_accounts() const {
    std::set<std::string> out;
    for (const auto& [idx, acct] : disguise_accounts_) {
      (void)idx;
      out.insert(acct);
    }
    return out;
  }

  const std::string& first_disguise_account() const {
    if (disguise_accounts_.empty()) throw SimError("no disguise account registered");
    return disguise_accounts_.begin()->second;
  }

  std::string account_profile_json(std::size_t group_index) const {
    const Account* acct = platform_.account(disguise_accounts_.at(group_index));
    if (!acct) throw SimError("disguise account vanished");
    json j{{"name", acct->id},
           {"bio", acct->bio},
           {"midjourney descriptors for avatar images", acct->avatar_descriptor}};
    return j.dump();
  }

  std::string promotion_text() const {
    std::string out = config_.promotion.payload;
    if (!config_.promotion.goal_note.empty()) out += " (" + config_.promotion.goal_note + ")";
    return out;
  }

  // Topic for camouflage content: the first list entry of the card's last
  // list-valued key (the favorite-content slot in the shipped schemas),
  // slugged into a tag.
  static std::string camouflage_topic(const GroupProfileCard& card) {
    std::string pick;
    for (const auto& [k, v] : card.data.items()) {
      (void)k;
      if (v.is_array() && !v.empty() && v.front().is_string() &&
          v.front().get<std::string>() != "unknown")
        pick = v.front().get<std::string>();
    }
    if (pick.empty()) pick = "friends";
    std::string slug;
    for (char c : to_lower(pick))
      if (std::isalnum(static_cast<unsigned char>(c))) slug += c;
    if (slug.empty()) slug = "friends";
    return "#" + slug;
  }

  void publish_consistency_post(const Thread& thread) {
    GenerationRequest request;
    request.template_id = template_ids::kConsistencyPost;
    request.bindings = {{"platform_style", platform_style_},
                        {"account_profile", profile_json_for(thread.disguise_account)},
                        {"victim_card", thread.card.data.dump()}};
    request.seed = seed_ + 2000 + static_cast<std::uint64_t>(consistency_published_);
    std::string body = backend_.generate(request).text;

    std::string tag = "#" + first_card_value_slug(thread.card);
    platform_.publish_post(thread.disguise_account, tag, body + " " + tag);
    consistency_published_ += 1;
  }

  std::string profile_json_for(const std::string& account_id) const {
    const Account* acct = platform_.account(account_id);
    if (!acct) throw SimError("unknown account: " + account_id);
    json j{{"name", acct->id},
           {"bio", acct->bio},
           {"midjourney descriptors for avatar images", acct->avatar_descriptor}};
    return j.dump();
  }

  static std::string first_card_value_slug(const VictimCard& card) {
    for (const auto& v : card.known_values()) {
      std::string slug;
      for (char c : to_lower(v))
        if (std::isalnum(static_cast<unsigned char>(c))) slug += c;
      if (!slug.empty()) return slug;
    }
    return "life";
  }

  static std::string numbered_posts(const std::vector<const Post*>& posts) {
    std::string out;
    for (std::size_t i = 0; i < posts.size(); ++i)
      out += std::to_string(i + 1) + ". " + posts[i]->body + "\n";
    return out;
  }

  static std::string field_text(const json& obj, const std::string& key,
                                const std::string& raw) {
    const json* v = card_get(obj, key);
    if (!v) throw ParseError("missing field '" + key + "' in backend output", raw);
    if (v->is_string()) {
      std::string s = v->get<std::string>();
      if (trim(s).empty()) throw ParseError("empty field '" + key + "'", raw);
      return s;
    }
    if (v->is_array() && !v->empty() && v->front().is_string())
      return v->front().get<std::string>();
    throw ParseError("field '" + key + "' is not text", raw);
  }

  std::string id_;
  std::uint64_t seed_;
  PerpetratorConfig config_;
  Backend& backend_;
  Platform& platform_;
  EventLog& log_;

  PipelineStage stage_ = PipelineStage::data_processing;
  bool announced_ = false;
  std::string platform_style_;
  std::map<std::string, std::string> topic_subjects_;
  std::vector<GroupProfileCard> group_cards_;
  std::map<std::size_t, std::string> disguise_accounts_;
  std::map<std::size_t, int> camouflage_published_;
  int ads_published_ = 0;
  int consistency_published_ = 0;
  std::string selected_topic_;
  std::map<std::string, Thread> threads_;
  std::map<std::string, int> attempts_;
  int budget_ = 0;
};

}  // namespace shadowsim
