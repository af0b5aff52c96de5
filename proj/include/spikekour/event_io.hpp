#pragma once

#include <cstdio>
#include <fstream>
#include <istream>
#include <ostream>
#include <string>
#include <vector>

#include "spikekour/events.hpp"

namespace spikekour::events {

// "DSEQ": u32 version=1, u32 width, u32 height, u32 frame_count, f32 fps,
// then frame_count frames of width*height little-endian f32 meters, row-major.
struct DepthSequence {
  uint32_t width = 0;
  uint32_t height = 0;
  float fps = 10.0f;
  std::vector<std::vector<float>> frames;

  DepthFrame frame(std::size_t i) const {
    DepthFrame f(static_cast<int>(width), static_cast<int>(height));
    f.values = frames.at(i);
    f.timestamp = static_cast<double>(i) / fps;
    return f;
  }
};

inline void write_dseq(const DepthSequence& seq, std::ostream& os) {
  os.write("DSEQ", 4);
  binio::put_u32(os, 1);
  binio::put_u32(os, seq.width);
  binio::put_u32(os, seq.height);
  binio::put_u32(os, static_cast<uint32_t>(seq.frames.size()));
  binio::put_f32(os, seq.fps);
  for (const auto& f : seq.frames) {
    if (f.size() != static_cast<std::size_t>(seq.width) * seq.height)
      throw Error("write_dseq: frame size does not match header");
    for (float v : f) binio::put_f32(os, v);
  }
}

inline DepthSequence read_dseq(std::istream& is) {
  unsigned char hdr[24];
  if (!binio::get_bytes(is, hdr, 24)) throw ParseError("DSEQ header truncated", 0);
  if (std::memcmp(hdr, "DSEQ", 4) != 0)
    throw ParseError("bad magic, expected \"DSEQ\"", 0);
  uint32_t version = binio::decode_u32(hdr + 4);
  if (version != 1) throw ParseError("unsupported DSEQ version " + std::to_string(version), 4);
  DepthSequence seq;
  seq.width = binio::decode_u32(hdr + 8);
  seq.height = binio::decode_u32(hdr + 12);
  uint32_t count = binio::decode_u32(hdr + 16);
  seq.fps = binio::decode_f32(hdr + 20);
  if (seq.width == 0 || seq.height == 0) throw ParseError("DSEQ zero frame dimensions", 8);
  if (!(seq.fps > 0.0f)) throw ParseError("DSEQ fps must be > 0", 20);
  std::size_t px = static_cast<std::size_t>(seq.width) * seq.height;
  for (uint32_t f = 0; f < count; ++f) {
    std::vector<unsigned char> raw(px * 4);
    if (!binio::get_bytes(is, raw.data(), raw.size()))
      throw ParseError("DSEQ frame " + std::to_string(f) + " truncated",
                       24 + static_cast<std::size_t>(f) * px * 4);
    std::vector<float> frame(px);
    for (std::size_t i = 0; i < px; ++i) frame[i] = binio::decode_f32(&raw[i * 4]);
    seq.frames.push_back(std::move(frame));
  }
  return seq;
}

// "EVT1": u32 version=1, u32 width, u32 height, u64 event_count, then
// records of u16 x, u16 y, f64 t, i8 p, 1 pad byte (14 bytes each).
struct Evt1Header {
  uint32_t width = 0;
  uint32_t height = 0;
};

constexpr std::size_t kEvt1HeaderBytes = 24;
constexpr std::size_t kEvt1RecordBytes = 14;

inline void serialize_events(const EventStream& s, uint32_t width, uint32_t height,
                             std::ostream& os) {
  os.write("EVT1", 4);
  binio::put_u32(os, 1);
  binio::put_u32(os, width);
  binio::put_u32(os, height);
  binio::put_u64(os, static_cast<uint64_t>(s.size()));
  for (const Event& e : s) {
    binio::put_u16(os, e.x);
    binio::put_u16(os, e.y);
    binio::put_f64(os, e.t);
    binio::put_i8(os, e.p);
    binio::put_i8(os, 0);
  }
}

inline std::pair<Evt1Header, EventStream> parse_events(std::istream& is) {
  unsigned char hdr[kEvt1HeaderBytes];
  if (!binio::get_bytes(is, hdr, kEvt1HeaderBytes)) throw ParseError("EVT1 header truncated", 0);
  if (std::memcmp(hdr, "EVT1", 4) != 0)
    throw ParseError("bad magic, expected \"EVT1\"", 0);
  uint32_t version = binio::decode_u32(hdr + 4);
  if (version != 1) throw ParseError("unsupported EVT1 version " + std::to_string(version), 4);
  Evt1Header h;
  h.width = binio::decode_u32(hdr + 8);
  h.height = binio::decode_u32(hdr + 12);
  uint64_t count = binio::decode_u64(hdr + 16);
  EventStream out;
  out.reserve(static_cast<std::size_t>(count));
  for (uint64_t i = 0; i < count; ++i) {
    std::size_t base = kEvt1HeaderBytes + static_cast<std::size_t>(i) * kEvt1RecordBytes;
    unsigned char rec[kEvt1RecordBytes];
    if (!binio::get_bytes(is, rec, kEvt1RecordBytes))
      throw ParseError("EVT1 record " + std::to_string(i) + " truncated", base);
    Event e;
    e.x = binio::decode_u16(rec);
    e.y = binio::decode_u16(rec + 2);
    e.t = binio::decode_f64(rec + 4);
    int8_t p = static_cast<int8_t>(rec[12]);
    if (e.x >= h.width) throw ParseError("EVT1 x coordinate out of range", base);
    if (e.y >= h.height) throw ParseError("EVT1 y coordinate out of range", base + 2);
    if (p != 1 && p != -1) throw ParseError("EVT1 polarity must be +1 or -1", base + 12);
    e.p = p;
    out.push_back(e);
  }
  return {h, out};
}

inline void write_events_csv(const EventStream& s, std::ostream& os) {
  os << "x,y,t,p\n";
  char buf[64];
  for (const Event& e : s) {
    std::snprintf(buf, sizeof(buf), "%u,%u,%.9f,%d\n", static_cast<unsigned>(e.x),
                  static_cast<unsigned>(e.y), e.t, static_cast<int>(e.p));
    os << buf;
  }
}

// "FSEQ": same header layout as DSEQ, then per frame a vx plane followed by
// a vy plane (f32 pixels/second). Supplies externally computed optical flow
// for flow-mode event simulation.
struct FlowSequence {
  uint32_t width = 0;
  uint32_t height = 0;
  float fps = 10.0f;
  std::vector<FlowField> frames;
};

inline void write_fseq(const FlowSequence& seq, std::ostream& os) {
  os.write("FSEQ", 4);
  binio::put_u32(os, 1);
  binio::put_u32(os, seq.width);
  binio::put_u32(os, seq.height);
  binio::put_u32(os, static_cast<uint32_t>(seq.frames.size()));
  binio::put_f32(os, seq.fps);
  for (const auto& f : seq.frames) {
    for (float v : f.vx) binio::put_f32(os, v);
    for (float v : f.vy) binio::put_f32(os, v);
  }
}

inline FlowSequence read_fseq(std::istream& is) {
  unsigned char hdr[24];
  if (!binio::get_bytes(is, hdr, 24)) throw ParseError("FSEQ header truncated", 0);
  if (std::memcmp(hdr, "FSEQ", 4) != 0) throw ParseError("bad magic, expected \"FSEQ\"", 0);
  if (binio::decode_u32(hdr + 4) != 1) throw ParseError("unsupported FSEQ version", 4);
  FlowSequence seq;
  seq.width = binio::decode_u32(hdr + 8);
  seq.height = binio::decode_u32(hdr + 12);
  uint32_t count = binio::decode_u32(hdr + 16);
  seq.fps = binio::decode_f32(hdr + 20);
  std::size_t px = static_cast<std::size_t>(seq.width) * seq.height;
  for (uint32_t f = 0; f < count; ++f) {
    FlowField field(static_cast<int>(seq.width), static_cast<int>(seq.height));
    std::vector<unsigned char> raw(px * 8);
    if (!binio::get_bytes(is, raw.data(), raw.size()))
      throw ParseError("FSEQ frame " + std::to_string(f) + " truncated",
                       24 + static_cast<std::size_t>(f) * px * 8);
    for (std::size_t i = 0; i < px; ++i) field.vx[i] = binio::decode_f32(&raw[i * 4]);
    for (std::size_t i = 0; i < px; ++i) field.vy[i] = binio::decode_f32(&raw[(px + i) * 4]);
    seq.frames.push_back(std::move(field));
  }
  return seq;
}

inline void write_dseq_file(const DepthSequence& seq, const std::string& path) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw IoError("cannot write " + path);
  write_dseq(seq, os);
  if (!os) throw IoError("write failed for " + path);
}

inline DepthSequence read_dseq_file(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open " + path);
  return read_dseq(is);
}

inline void write_events_file(const EventStream& s, uint32_t width, uint32_t height,
                              const std::string& path) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw IoError("cannot write " + path);
  serialize_events(s, width, height, os);
  if (!os) throw IoError("write failed for " + path);
}

inline std::pair<Evt1Header, EventStream> read_events_file(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open " + path);
  return parse_events(is);
}

}  // namespace spikekour::events
