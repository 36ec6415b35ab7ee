#include "hstf/reassembly.hpp"

#include <algorithm>

namespace hstf::capture {

const SegmentMeta* StreamDirection::meta_at(std::uint64_t offset) const {
  auto it = std::upper_bound(segments.begin(), segments.end(), offset,
                             [](std::uint64_t off, const SegmentMeta& m) { return off < m.offset; });
  if (it == segments.begin()) return nullptr;
  --it;
  if (offset >= it->offset + it->length) return nullptr;
  return &*it;
}

std::string ConnectionKey::to_string() const {
  return format_ipv4(client_ip) + ":" + std::to_string(client_port) + "-" + format_ipv4(server_ip) +
         ":" + std::to_string(server_port);
}

std::size_t Reassembler::KeyHash::operator()(const std::pair<Endpoint, Endpoint>& k) const noexcept {
  std::uint64_t h = (static_cast<std::uint64_t>(k.first.ip) << 16 | k.first.port) * 0x9e3779b97f4a7c15ULL;
  h ^= (static_cast<std::uint64_t>(k.second.ip) << 16 | k.second.port) + 0x7f4a7c159e3779b9ULL + (h << 6) +
       (h >> 2);
  return static_cast<std::size_t>(h);
}

Reassembler::Reassembler(ReassemblyOptions options) : options_(options) {}

std::int64_t Reassembler::relative(Direction& dir, std::uint32_t seq) const {
  if (!dir.anchored) {
    dir.anchored = true;
    dir.anchor_seq = seq;
  }
  return static_cast<std::int64_t>(static_cast<std::int32_t>(seq - dir.anchor_seq));
}

void Reassembler::insert_piece(Direction& dir, std::int64_t start, Piece piece) {
  const std::int64_t end = start + static_cast<std::int64_t>(piece.bytes.size());
  std::int64_t lo = start;
  if (dir.base_fixed) lo = std::max(lo, dir.committed_end);
  if (lo >= end) return;

  auto it = dir.pending.upper_bound(lo);
  if (it != dir.pending.begin()) {
    auto prev = std::prev(it);
    if (prev->second.end > lo) it = prev;
  }
  std::vector<std::pair<std::int64_t, std::int64_t>> uncovered;
  std::int64_t cursor = lo;
  for (; it != dir.pending.end() && it->first < end; ++it) {
    if (it->first > cursor) uncovered.emplace_back(cursor, it->first);
    cursor = std::max(cursor, it->second.end);
  }
  if (cursor < end) uncovered.emplace_back(cursor, end);

  for (const auto& [a, b] : uncovered) {
    Piece part;
    part.end = b;
    part.bytes.assign(piece.bytes.begin() + (a - start), piece.bytes.begin() + (b - start));
    part.ttl = piece.ttl;
    part.timestamp_us = piece.timestamp_us;
    part.capture_index = piece.capture_index;
    part.segment_id = piece.segment_id;
    dir.pending_bytes += part.bytes.size();
    dir.pending.emplace(a, std::move(part));
  }
}

void Reassembler::commit(Direction& dir, bool flush_all) {
  if (!dir.base_fixed) {
    if (dir.syn_base) {
      dir.committed_end = *dir.syn_base;
    } else if (flush_all && !dir.pending.empty()) {
      dir.committed_end = dir.pending.begin()->first;
    } else {
      return;
    }
    dir.base_fixed = true;
  }
  while (!dir.pending.empty()) {
    auto it = dir.pending.begin();
    std::int64_t start = it->first;
    Piece& p = it->second;
    if (p.end <= dir.committed_end) {
      dir.pending_bytes -= p.bytes.size();
      dir.pending.erase(it);
      continue;
    }
    if (start < dir.committed_end) {
      // Bytes before the stream base (e.g. data preceding the SYN in sequence space).
      const auto drop = static_cast<std::size_t>(dir.committed_end - start);
      dir.pending_bytes -= drop;
      p.bytes.erase(p.bytes.begin(), p.bytes.begin() + static_cast<std::ptrdiff_t>(drop));
      start = dir.committed_end;
    }
    if (start > dir.committed_end) {
      if (!flush_all) break;
      dir.out.lossy = true;
    }
    SegmentMeta meta;
    meta.offset = dir.out.data.size();
    meta.length = static_cast<std::uint32_t>(p.bytes.size());
    meta.ttl = p.ttl;
    meta.timestamp_us = p.timestamp_us;
    meta.capture_index = p.capture_index;
    dir.out.segments.push_back(meta);
    dir.out.data.insert(dir.out.data.end(), p.bytes.begin(), p.bytes.end());
    dir.contributing_ids.push_back(p.segment_id);
    dir.committed_end = p.end;
    dir.pending_bytes -= p.bytes.size();
    dir.pending.erase(it);
  }
}

bool Reassembler::complete(const Direction& dir) const {
  return dir.syn_base && dir.fin_end && dir.base_fixed && dir.committed_end >= *dir.fin_end;
}

void Reassembler::push(const TcpSegment& seg) {
  const Endpoint src{seg.tuple.src_ip, seg.tuple.src_port};
  const Endpoint dst{seg.tuple.dst_ip, seg.tuple.dst_port};
  const bool from_low = src < dst;
  const auto key = from_low ? std::make_pair(src, dst) : std::make_pair(dst, src);

  auto found = open_.find(key);
  if (found == open_.end()) {
    // Stray ACK/FIN/RST for a connection already closed (or never seen) opens nothing.
    if (seg.payload.empty() && !seg.flags.syn) return;
    Connection conn;
    conn.low = key.first;
    conn.high = key.second;
    conn.first_sender_low = from_low;
    conn.first_capture_index = seg.capture_index;
    found = open_.emplace(key, std::move(conn)).first;
  }
  Connection& conn = found->second;
  conn.first_capture_index = std::min(conn.first_capture_index, seg.capture_index);
  Direction& dir = from_low ? conn.from_low : conn.from_high;

  const std::int64_t rel = relative(dir, seg.seq);
  std::int64_t data_start = rel;
  if (seg.flags.syn) {
    if (!seg.flags.ack) {
      conn.client_is_low = from_low;
    } else if (!conn.client_is_low) {
      conn.client_is_low = !from_low;
    }
    dir.syn_base = rel + 1;
    data_start = rel + 1;
  }
  if (!seg.payload.empty()) {
    Piece piece;
    piece.bytes = seg.payload;
    piece.ttl = seg.ip_ttl;
    piece.timestamp_us = seg.timestamp_us;
    piece.capture_index = seg.capture_index;
    piece.segment_id = next_segment_id_++;
    insert_piece(dir, data_start, std::move(piece));
  }
  if (seg.flags.fin) {
    dir.fin_end = data_start + static_cast<std::int64_t>(seg.payload.size());
  }

  if (seg.flags.rst) {
    ready_.push_back(close(conn));
    open_.erase(found);
    return;
  }

  commit(dir, false);
  if (dir.pending_bytes > options_.max_buffer_bytes) {
    dir.out.lossy = true;
    commit(dir, true);
  }

  if (complete(conn.from_low) && complete(conn.from_high)) {
    ready_.push_back(close(conn));
    open_.erase(found);
  }
}

TcpStreamPair Reassembler::close(Connection& conn) {
  for (Direction* dir : {&conn.from_low, &conn.from_high}) {
    commit(*dir, true);
    if (dir->fin_end && dir->committed_end < *dir->fin_end) dir->out.lossy = true;
    auto& ids = dir->contributing_ids;
    std::sort(ids.begin(), ids.end());
    ids.erase(std::unique(ids.begin(), ids.end()), ids.end());
    dir->out.payload_segments = ids.size();
  }

  bool client_low;
  if (conn.client_is_low) {
    client_low = *conn.client_is_low;
  } else if (conn.low.port != conn.high.port) {
    client_low = conn.low.port > conn.high.port;  // ephemeral side is the client
  } else {
    client_low = conn.first_sender_low;
  }

  TcpStreamPair pair;
  const Endpoint& client = client_low ? conn.low : conn.high;
  const Endpoint& server = client_low ? conn.high : conn.low;
  pair.key = ConnectionKey{client.ip, client.port, server.ip, server.port};
  pair.client_to_server = std::move(client_low ? conn.from_low.out : conn.from_high.out);
  pair.server_to_client = std::move(client_low ? conn.from_high.out : conn.from_low.out);
  pair.first_capture_index = conn.first_capture_index;
  return pair;
}

std::vector<TcpStreamPair> Reassembler::drain() {
  std::vector<TcpStreamPair> out;
  out.swap(ready_);
  return out;
}

std::vector<TcpStreamPair> Reassembler::finish() {
  std::vector<Connection*> remaining;
  remaining.reserve(open_.size());
  for (auto& [key, conn] : open_) remaining.push_back(&conn);
  std::sort(remaining.begin(), remaining.end(), [](const Connection* a, const Connection* b) {
    return a->first_capture_index < b->first_capture_index;
  });
  for (Connection* conn : remaining) ready_.push_back(close(*conn));
  open_.clear();
  return drain();
}

std::vector<TcpStreamPair> reassemble(std::span<const TcpSegment> segments, ReassemblyOptions options) {
  Reassembler r(options);
  std::vector<TcpStreamPair> out;
  for (const auto& seg : segments) {
    r.push(seg);
    for (auto& p : r.drain()) out.push_back(std::move(p));
  }
  for (auto& p : r.finish()) out.push_back(std::move(p));
  return out;
}

}  // namespace hstf::capture
