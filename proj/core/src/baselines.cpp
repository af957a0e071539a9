#include <algorithm>
#include <cstdlib>
#include <fstream>

#include "json.hpp"
#include "selep/baselines.hpp"
#include "selep/error.hpp"

namespace selep::baselines {

namespace {

std::vector<Lba> sorted_lbas(const data::Database& db, std::span<const BlockId> blocks) {
  std::vector<Lba> out;
  out.reserve(blocks.size());
  for (const auto& b : blocks) out.push_back(db.lba(b));
  std::sort(out.begin(), out.end());
  out.erase(std::unique(out.begin(), out.end()), out.end());
  return out;
}

std::vector<BlockId> to_blocks(const data::Database& db, std::span<const Lba> lbas, std::size_t budget) {
  std::vector<BlockId> out;
  out.reserve(std::min(budget, lbas.size()));
  for (std::size_t i = 0; i < lbas.size() && out.size() < budget; ++i) out.push_back(db.block_at(lbas[i]));
  return out;
}

}  // namespace

std::vector<Lba> lookahead_candidates(Lba last, std::size_t count, Lba total) {
  std::vector<Lba> out;
  for (Lba a = last + 1; a < total && out.size() < count; ++a) out.push_back(a);
  return out;
}

void LookaheadPrefetcher::observe(std::span<const BlockId> res_b) {
  const auto lbas = sorted_lbas(db_, res_b);
  if (!lbas.empty()) last_ = lbas.back();
}

std::vector<BlockId> LookaheadPrefetcher::candidates(std::size_t budget) {
  if (!last_) return {};
  const auto lbas = lookahead_candidates(*last_, budget, db_.total_blocks());
  return to_blocks(db_, lbas, budget);
}

std::size_t DeltaHistogram::count(std::int64_t delta) const {
  const auto it = counts_.find(delta);
  return it == counts_.end() ? 0 : it->second;
}

std::size_t DeltaHistogram::total() const {
  std::size_t n = 0;
  for (const auto& [_, c] : counts_) n += c;
  return n;
}

std::optional<std::int64_t> DeltaHistogram::dominant() const {
  std::optional<std::int64_t> best;
  std::size_t best_count = 0;
  auto preferred = [](std::int64_t a, std::int64_t b) {
    const auto ma = std::llabs(a), mb = std::llabs(b);
    return ma != mb ? ma < mb : a > b;
  };
  for (const auto& [d, c] : counts_)
    if (!best || c > best_count || (c == best_count && preferred(d, *best))) {
      best = d;
      best_count = c;
    }
  return best;
}

std::vector<Lba> naive_candidates(const DeltaHistogram& hist, Lba last, std::size_t n, Lba total) {
  std::vector<Lba> out;
  const auto d = hist.dominant();
  if (!d || *d == 0) return out;
  auto pos = static_cast<std::int64_t>(last);
  for (std::size_t i = 0; i < n; ++i) {
    pos += *d;
    if (pos < 0 || static_cast<Lba>(pos) >= total) break;
    out.push_back(static_cast<Lba>(pos));
  }
  return out;
}

void NaivePrefetcher::observe(std::span<const BlockId> res_b) {
  for (const auto lba : sorted_lbas(db_, res_b)) {
    if (last_) hist_.record(static_cast<std::int64_t>(lba) - static_cast<std::int64_t>(*last_));
    last_ = lba;
  }
}

std::vector<BlockId> NaivePrefetcher::candidates(std::size_t budget) {
  if (!last_) return {};
  const auto lbas = naive_candidates(hist_, *last_, budget, db_.total_blocks());
  return to_blocks(db_, lbas, budget);
}

ExtentWindow::ExtentWindow(std::size_t extent_size, std::size_t window_length, std::size_t threshold)
    : extent_size_(extent_size), window_length_(window_length), threshold_(threshold) {
  if (extent_size == 0 || window_length == 0 || threshold == 0)
    throw ConfigError("readahead extent size, window length and threshold must be positive");
}

std::size_t ExtentWindow::presence(std::uint64_t extent) const {
  const auto it = distinct_.find(extent);
  return it == distinct_.end() ? 0 : it->second;
}

void ExtentWindow::add(Lba lba) {
  window_.push_back(lba);
  if (multiplicity_[lba]++ == 0) ++distinct_[lba / extent_size_];
}

void ExtentWindow::evict() {
  const Lba lba = window_.front();
  window_.pop_front();
  auto it = multiplicity_.find(lba);
  if (--it->second > 0) return;
  multiplicity_.erase(it);
  const auto extent = lba / extent_size_;
  auto d = distinct_.find(extent);
  if (--d->second < threshold_) fired_.erase(extent);
  if (d->second == 0) distinct_.erase(d);
}

std::vector<std::uint64_t> ExtentWindow::push(std::span<const Lba> demands) {
  std::vector<std::uint64_t> touched;
  for (const auto lba : demands) {
    add(lba);
    while (window_.size() > window_length_) evict();
    touched.push_back(lba / extent_size_);
  }
  std::vector<std::uint64_t> fired;
  for (const auto e : touched)
    if (presence(e) >= threshold_ && fired_.insert(e).second) fired.push_back(e);
  return fired;
}

std::vector<Lba> rand_readahead_candidates(ExtentWindow& window, std::span<const Lba> new_demands, Lba total) {
  std::vector<Lba> out;
  for (const auto e : window.push(new_demands)) {
    const Lba first = e * window.extent_size();
    for (Lba a = first; a < first + window.extent_size() && a < total; ++a) out.push_back(a);
  }
  return out;
}

RandReadaheadPrefetcher::RandReadaheadPrefetcher(const data::Database& db, std::size_t extent_size,
                                                 std::size_t window_length, std::size_t threshold)
    : db_(db), window_(extent_size, window_length, threshold) {}

void RandReadaheadPrefetcher::observe(std::span<const BlockId> res_b) {
  const auto lbas = sorted_lbas(db_, res_b);
  pending_ = rand_readahead_candidates(window_, lbas, db_.total_blocks());
}

std::vector<BlockId> RandReadaheadPrefetcher::candidates(std::size_t budget) {
  auto out = to_blocks(db_, pending_, budget);
  pending_.clear();
  return out;
}

ExternalPrefetcher::ExternalPrefetcher(std::map<std::uint64_t, std::vector<BlockId>> lists, std::string name)
    : lists_(std::move(lists)), name_(std::move(name)) {}

ExternalPrefetcher ExternalPrefetcher::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  std::map<std::uint64_t, std::vector<BlockId>> lists;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      const auto j = nlohmann::json::parse(line);
      auto& list = lists[j.at("q").get<std::uint64_t>()];
      for (const auto& b : j.at("b")) list.push_back({b.at(0).get<std::uint32_t>(), b.at(1).get<std::uint32_t>()});
    } catch (const nlohmann::json::exception& e) {
      throw ParseError(line_no, e.what());
    }
  }
  return ExternalPrefetcher(std::move(lists), path.stem().string());
}

std::vector<BlockId> ExternalPrefetcher::candidates(std::size_t budget) {
  if (!current_) return {};
  const auto it = lists_.find(*current_);
  if (it == lists_.end()) return {};
  std::vector<BlockId> out;
  std::unordered_set<BlockId> seen;
  for (const auto& b : it->second) {
    if (out.size() >= budget) break;
    if (seen.insert(b).second) out.push_back(b);
  }
  return out;
}

std::string_view to_string(BaselineKind kind) {
  switch (kind) {
    case BaselineKind::none: return "NP";
    case BaselineKind::lookahead: return "Lookahead";
    case BaselineKind::naive: return "Naive";
    case BaselineKind::rand_readahead: return "Rand-Readahead";
  }
  return "NP";
}

std::optional<BaselineKind> parse_baseline_kind(std::string_view text) {
  for (auto k : {BaselineKind::none, BaselineKind::lookahead, BaselineKind::naive, BaselineKind::rand_readahead})
    if (to_string(k) == text) return k;
  if (text == "np" || text == "none") return BaselineKind::none;
  if (text == "lookahead") return BaselineKind::lookahead;
  if (text == "naive") return BaselineKind::naive;
  if (text == "rand-readahead" || text == "rr") return BaselineKind::rand_readahead;
  return std::nullopt;
}

std::unique_ptr<Prefetcher> make_prefetcher(BaselineKind kind, const data::Database& db, const BaselineConfig& config) {
  switch (kind) {
    case BaselineKind::none: return std::make_unique<NoPrefetch>();
    case BaselineKind::lookahead: return std::make_unique<LookaheadPrefetcher>(db);
    case BaselineKind::naive: return std::make_unique<NaivePrefetcher>(db);
    case BaselineKind::rand_readahead:
      return std::make_unique<RandReadaheadPrefetcher>(db, config.extent_factor * config.max_par_size,
                                                       config.rr_window, config.rr_threshold);
  }
  throw ConfigError("unknown baseline");
}

}  // namespace selep::baselines
