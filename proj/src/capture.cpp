#include "hstf/capture.hpp"

#include <array>
#include <sstream>

#include "hstf/error.hpp"

namespace hstf::capture {
namespace {

constexpr std::uint16_t kEtherTypeIpv4 = 0x0800;
constexpr std::uint16_t kEtherTypeIpv6 = 0x86dd;
constexpr std::uint16_t kEtherTypeVlan = 0x8100;
constexpr std::size_t kEthernetHeader = 14;

std::uint16_t be16(const std::uint8_t* p) { return static_cast<std::uint16_t>(p[0] << 8 | p[1]); }

std::uint32_t be32(const std::uint8_t* p) {
  return static_cast<std::uint32_t>(p[0]) << 24 | static_cast<std::uint32_t>(p[1]) << 16 |
         static_cast<std::uint32_t>(p[2]) << 8 | p[3];
}

void put_be16(Bytes& out, std::uint16_t v) {
  out.push_back(static_cast<std::uint8_t>(v >> 8));
  out.push_back(static_cast<std::uint8_t>(v));
}

void put_be32(Bytes& out, std::uint32_t v) {
  put_be16(out, static_cast<std::uint16_t>(v >> 16));
  put_be16(out, static_cast<std::uint16_t>(v));
}

// Ones-complement sum folded to 16 bits, as used by IPv4 and TCP checksums.
std::uint32_t checksum_add(std::uint32_t sum, const std::uint8_t* data, std::size_t len) {
  for (std::size_t i = 0; i + 1 < len; i += 2) sum += be16(data + i);
  if (len % 2 != 0) sum += static_cast<std::uint32_t>(data[len - 1]) << 8;
  return sum;
}

std::uint16_t checksum_finish(std::uint32_t sum) {
  while (sum >> 16) sum = (sum & 0xffff) + (sum >> 16);
  return static_cast<std::uint16_t>(~sum);
}

}  // namespace

PcapReader::PcapReader(const std::string& path) {
  auto file = std::make_unique<std::ifstream>(path, std::ios::binary);
  if (!*file) throw Error(Errc::Io, "cannot open capture '" + path + "'");
  in_ = std::move(file);
  read_global_header();
}

PcapReader::PcapReader(std::unique_ptr<std::istream> in) : in_(std::move(in)) {
  read_global_header();
}

std::uint32_t PcapReader::load32(const std::uint8_t* p) const noexcept {
  std::uint32_t v = static_cast<std::uint32_t>(p[0]) | static_cast<std::uint32_t>(p[1]) << 8 |
                    static_cast<std::uint32_t>(p[2]) << 16 | static_cast<std::uint32_t>(p[3]) << 24;
  return swapped_ ? __builtin_bswap32(v) : v;
}

void PcapReader::read_global_header() {
  std::array<std::uint8_t, kGlobalHeaderSize> hdr{};
  in_->read(reinterpret_cast<char*>(hdr.data()), hdr.size());
  if (static_cast<std::size_t>(in_->gcount()) < 4) {
    throw Error(Errc::TruncatedHeader, "capture shorter than the 24-byte global header");
  }
  // Magic is read little-endian; a big-endian file then shows up swapped.
  std::uint32_t magic = static_cast<std::uint32_t>(hdr[0]) | static_cast<std::uint32_t>(hdr[1]) << 8 |
                        static_cast<std::uint32_t>(hdr[2]) << 16 |
                        static_cast<std::uint32_t>(hdr[3]) << 24;
  if (magic == kPcapMagic) {
    swapped_ = false;
  } else if (magic == kPcapMagicSwapped) {
    swapped_ = true;
  } else {
    throw Error(Errc::UnsupportedMagic, "not a classic pcap file");
  }
  if (static_cast<std::size_t>(in_->gcount()) < hdr.size()) {
    throw Error(Errc::TruncatedHeader, "capture shorter than the 24-byte global header");
  }
  snaplen_ = load32(hdr.data() + 16);
  link_type_ = load32(hdr.data() + 20);
  if (link_type_ != kLinkTypeEthernet) {
    throw Error(Errc::UnsupportedLinkType, "link type " + std::to_string(link_type_));
  }
}

std::optional<RawPacket> PcapReader::next() {
  std::array<std::uint8_t, kRecordHeaderSize> hdr{};
  in_->read(reinterpret_cast<char*>(hdr.data()), hdr.size());
  const auto got = static_cast<std::size_t>(in_->gcount());
  if (got == 0) return std::nullopt;
  if (got < hdr.size()) throw Error(Errc::TruncatedHeader, "partial 16-byte record header");

  RawPacket pkt;
  pkt.ts_sec = load32(hdr.data());
  pkt.ts_usec = load32(hdr.data() + 4);
  const std::uint32_t incl = load32(hdr.data() + 8);
  pkt.original_length = load32(hdr.data() + 12);
  if (incl > pkt.original_length) {
    throw Error(Errc::MalformedHeader, "record incl_len exceeds orig_len");
  }
  pkt.captured.resize(incl);
  in_->read(reinterpret_cast<char*>(pkt.captured.data()), incl);
  if (static_cast<std::uint32_t>(in_->gcount()) < incl) {
    throw Error(Errc::TruncatedHeader, "record data cut short by end of file");
  }
  return pkt;
}

std::vector<RawPacket> read_capture(const std::string& path) {
  PcapReader reader(path);
  std::vector<RawPacket> packets;
  while (auto pkt = reader.next()) packets.push_back(std::move(*pkt));
  return packets;
}

PcapWriter::PcapWriter(const std::string& path, ByteOrder order, std::uint32_t snaplen)
    : out_(path, std::ios::binary | std::ios::trunc), order_(order) {
  if (!out_) throw Error(Errc::Io, "cannot create capture '" + path + "'");
  put32(kPcapMagic);
  put16(2);
  put16(4);
  put32(0);  // thiszone
  put32(0);  // sigfigs
  put32(snaplen);
  put32(kLinkTypeEthernet);
}

void PcapWriter::put32(std::uint32_t v) {
  std::array<char, 4> b{};
  for (int i = 0; i < 4; ++i) {
    const int shift = order_ == ByteOrder::Little ? 8 * i : 8 * (3 - i);
    b[i] = static_cast<char>(v >> shift);
  }
  out_.write(b.data(), b.size());
}

void PcapWriter::put16(std::uint16_t v) {
  std::array<char, 2> b{};
  if (order_ == ByteOrder::Little) {
    b = {static_cast<char>(v), static_cast<char>(v >> 8)};
  } else {
    b = {static_cast<char>(v >> 8), static_cast<char>(v)};
  }
  out_.write(b.data(), b.size());
}

void PcapWriter::write(const RawPacket& packet) {
  put32(packet.ts_sec);
  put32(packet.ts_usec);
  put32(static_cast<std::uint32_t>(packet.captured.size()));
  put32(packet.original_length);
  out_.write(reinterpret_cast<const char*>(packet.captured.data()),
             static_cast<std::streamsize>(packet.captured.size()));
  if (!out_) throw Error(Errc::Io, "write to capture failed");
}

void PcapWriter::close() {
  out_.flush();
  if (!out_) throw Error(Errc::Io, "flushing capture failed");
  out_.close();
}

void write_capture(const std::string& path, std::span<const RawPacket> packets, ByteOrder order) {
  PcapWriter writer(path, order);
  for (const auto& p : packets) writer.write(p);
  writer.close();
}

DecodeResult decode_segment(const RawPacket& packet, std::uint64_t capture_index) {
  const auto& b = packet.captured;
  if (b.size() < kEthernetHeader) throw Error(Errc::MalformedHeader, "frame shorter than Ethernet header");
  std::size_t off = 12;
  std::uint16_t ether_type = be16(b.data() + off);
  off += 2;
  if (ether_type == kEtherTypeVlan) {
    if (b.size() < off + 4) throw Error(Errc::MalformedHeader, "truncated 802.1Q tag");
    ether_type = be16(b.data() + off + 2);
    off += 4;
  }
  if (ether_type == kEtherTypeIpv6) return SkipReason::Ipv6;
  if (ether_type != kEtherTypeIpv4) return SkipReason::NotIpv4;

  if (b.size() < off + 20) throw Error(Errc::MalformedHeader, "truncated IPv4 header");
  const std::uint8_t* ip = b.data() + off;
  if ((ip[0] >> 4) != 4) throw Error(Errc::MalformedHeader, "IPv4 version field is not 4");
  const std::size_t ihl = static_cast<std::size_t>(ip[0] & 0x0f) * 4;
  const std::size_t total_len = be16(ip + 2);
  if (ihl < 20 || total_len < ihl || off + total_len > b.size()) {
    throw Error(Errc::MalformedHeader, "IPv4 lengths inconsistent with captured bytes");
  }
  const std::uint16_t frag = be16(ip + 6);
  if ((frag & 0x2000) != 0 || (frag & 0x1fff) != 0) return SkipReason::Fragment;
  if (ip[9] != 6) return SkipReason::NotTcp;

  TcpSegment seg;
  seg.ip_ttl = ip[8];
  seg.tuple.src_ip = be32(ip + 12);
  seg.tuple.dst_ip = be32(ip + 16);
  seg.tuple.protocol = 6;

  const std::uint8_t* tcp = ip + ihl;
  const std::size_t tcp_avail = total_len - ihl;
  if (tcp_avail < 20) throw Error(Errc::MalformedHeader, "truncated TCP header");
  const std::size_t data_off = static_cast<std::size_t>(tcp[12] >> 4) * 4;
  if (data_off < 20 || data_off > tcp_avail) {
    throw Error(Errc::MalformedHeader, "TCP data offset inconsistent with IPv4 length");
  }
  seg.tuple.src_port = be16(tcp);
  seg.tuple.dst_port = be16(tcp + 2);
  if (seg.tuple.src_port == 0 || seg.tuple.dst_port == 0) {
    throw Error(Errc::MalformedHeader, "TCP port 0");
  }
  seg.seq = be32(tcp + 4);
  seg.ack = be32(tcp + 8);
  const std::uint8_t fl = tcp[13];
  seg.flags = TcpFlags{(fl & 0x02) != 0, (fl & 0x01) != 0, (fl & 0x04) != 0, (fl & 0x10) != 0,
                       (fl & 0x08) != 0};
  seg.timestamp_us = packet.timestamp_us();
  seg.capture_index = capture_index;
  seg.payload.assign(tcp + data_off, tcp + tcp_avail);
  return seg;
}

Bytes build_frame(const TcpSegment& segment) {
  const std::size_t total_len = 20 + 20 + segment.payload.size();
  Bytes f = {0x02, 0, 0, 0, 0, 0x02, 0x02, 0, 0, 0, 0, 0x01};  // dst, src MAC
  f.reserve(kEthernetHeader + total_len);
  put_be16(f, kEtherTypeIpv4);

  const std::size_t ip_off = f.size();
  f.push_back(0x45);
  f.push_back(0);
  put_be16(f, static_cast<std::uint16_t>(total_len));
  put_be16(f, static_cast<std::uint16_t>(segment.capture_index));  // identification
  put_be16(f, 0x4000);                                              // don't fragment
  f.push_back(segment.ip_ttl);
  f.push_back(6);
  put_be16(f, 0);
  put_be32(f, segment.tuple.src_ip);
  put_be32(f, segment.tuple.dst_ip);
  const std::uint16_t ip_sum = checksum_finish(checksum_add(0, f.data() + ip_off, 20));
  f[ip_off + 10] = static_cast<std::uint8_t>(ip_sum >> 8);
  f[ip_off + 11] = static_cast<std::uint8_t>(ip_sum);

  const std::size_t tcp_off = f.size();
  put_be16(f, segment.tuple.src_port);
  put_be16(f, segment.tuple.dst_port);
  put_be32(f, segment.seq);
  put_be32(f, segment.ack);
  f.push_back(0x50);
  const auto& fl = segment.flags;
  f.push_back(static_cast<std::uint8_t>((fl.fin ? 0x01 : 0) | (fl.syn ? 0x02 : 0) |
                                        (fl.rst ? 0x04 : 0) | (fl.psh ? 0x08 : 0) |
                                        (fl.ack ? 0x10 : 0)));
  put_be16(f, 65535);  // window
  put_be16(f, 0);      // checksum placeholder
  put_be16(f, 0);      // urgent pointer
  f.insert(f.end(), segment.payload.begin(), segment.payload.end());

  const std::size_t tcp_len = f.size() - tcp_off;
  std::uint32_t sum = checksum_add(0, f.data() + ip_off + 12, 8);
  sum += 6;
  sum += static_cast<std::uint32_t>(tcp_len);
  sum = checksum_add(sum, f.data() + tcp_off, tcp_len);
  const std::uint16_t tcp_sum = checksum_finish(sum);
  f[tcp_off + 16] = static_cast<std::uint8_t>(tcp_sum >> 8);
  f[tcp_off + 17] = static_cast<std::uint8_t>(tcp_sum);
  return f;
}

std::string format_ipv4(std::uint32_t ip) {
  std::ostringstream os;
  os << (ip >> 24) << '.' << ((ip >> 16) & 0xff) << '.' << ((ip >> 8) & 0xff) << '.' << (ip & 0xff);
  return os.str();
}

}  // namespace hstf::capture
