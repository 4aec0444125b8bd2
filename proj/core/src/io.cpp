#include "opcm/io.hpp"

#include <algorithm>
#include <array>
#include <bit>
#include <charconv>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iomanip>
#include <sstream>
#include <string>
#include <string_view>

#include <json.hpp>

#include "opcm/error.hpp"

namespace opcm {

namespace {

static_assert(std::endian::native == std::endian::little,
              "binary formats assume a little-endian host");

std::string_view trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r");
  return s.substr(first, last - first + 1);
}

template <typename T>
bool parse_number(std::string_view text, T& out) {
  text = trim(text);
  if (text.empty()) return false;
  if (text.front() == '+') text.remove_prefix(1);
  const auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), out);
  return ec == std::errc{} && ptr == text.data() + text.size();
}

std::vector<std::string_view> split(std::string_view line, char sep) {
  std::vector<std::string_view> fields;
  std::size_t start = 0;
  while (true) {
    const auto pos = line.find(sep, start);
    if (pos == std::string_view::npos) {
      fields.push_back(line.substr(start));
      return fields;
    }
    fields.push_back(line.substr(start, pos - start));
    start = pos + 1;
  }
}

std::ifstream open_in(const fs::path& path, std::ios::openmode mode = std::ios::in) {
  std::ifstream in(path, mode);
  if (!in) throw ValidationError("cannot open " + path.string());
  return in;
}

std::ofstream open_out(const fs::path& path, std::ios::openmode mode = std::ios::out) {
  std::ofstream out(path, mode | std::ios::trunc);
  if (!out) throw Error("cannot write " + path.string());
  return out;
}

template <typename T>
void put(std::string& buf, T value) {
  std::array<char, sizeof(T)> bytes;
  std::memcpy(bytes.data(), &value, sizeof(T));
  buf.append(bytes.data(), bytes.size());
}

template <typename T>
T get(const std::string& buf, std::size_t& offset) {
  T value;
  std::memcpy(&value, buf.data() + offset, sizeof(T));
  offset += sizeof(T);
  return value;
}

std::string slurp(const fs::path& path) {
  auto in = open_in(path, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

double require_number(const nlohmann::json& j, const char* key) {
  if (!j.contains(key)) throw ValidationError(std::string("calibration: missing key '") + key + "'");
  if (!j.at(key).is_number()) {
    throw ValidationError(std::string("calibration: key '") + key + "' is not a number");
  }
  return j.at(key).get<double>();
}

}  // namespace

// ---------------------------------------------------------------- events

EventSet read_events_csv(const fs::path& path, SensorSize sensor) {
  auto in = open_in(path);
  std::vector<Event> events;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto body = trim(line);
    if (body.empty() || body.front() == '#') continue;
    const auto fields = split(body, ',');
    if (fields.size() != 4) {
      throw ParseError("expected 4 fields t,x,y,p, got " + std::to_string(fields.size()), line_no);
    }
    Event e;
    long long x = 0, y = 0, p = 0;
    if (!parse_number(fields[0], e.t) || !std::isfinite(e.t)) {
      throw ParseError("bad timestamp '" + std::string(trim(fields[0])) + "'", line_no);
    }
    if (!parse_number(fields[1], x) || !parse_number(fields[2], y)) {
      throw ParseError("bad pixel coordinate", line_no);
    }
    if (!parse_number(fields[3], p) || p < -1 || p > 1) {
      throw ParseError("polarity must be -1, 0 or 1", line_no);
    }
    if (x < 0 || y < 0 || x >= sensor.width || y >= sensor.height) {
      std::ostringstream os;
      os << "event (t=" << e.t << ", x=" << x << ", y=" << y << ") outside the " << sensor.width
         << "x" << sensor.height << " sensor";
      throw BoundsError(os.str(), line_no);
    }
    e.x = static_cast<int>(x);
    e.y = static_cast<int>(y);
    e.p = p == 1 ? 1 : -1;
    events.push_back(e);
  }
  if (events.empty()) throw ValidationError("no events in " + path.string());
  std::stable_sort(events.begin(), events.end(),
                   [](const Event& a, const Event& b) { return a.t < b.t; });
  return EventSet(std::move(events), sensor);
}

void write_events_csv(const fs::path& path, const EventSet& events) {
  auto out = open_out(path);
  out << "# t,x,y,p\n";
  out << std::setprecision(17);
  for (const Event& e : events.events()) {
    out << e.t << ',' << e.x << ',' << e.y << ',' << e.p << '\n';
  }
  if (!out) throw Error("write failed: " + path.string());
}

EventSet read_events_binary(const fs::path& path) {
  const std::string buf = slurp(path);
  constexpr std::size_t header = 4 + 4 + 4 + 8;
  constexpr std::size_t record = 8 + 2 + 2 + 1;
  if (buf.size() < header || buf.compare(0, 4, "EVT1") != 0) {
    throw FormatError("not an EVT1 event file: " + path.string());
  }
  std::size_t off = 4;
  const auto width = get<std::uint32_t>(buf, off);
  const auto height = get<std::uint32_t>(buf, off);
  const auto count = get<std::uint64_t>(buf, off);
  if (count > (buf.size() - header) / record || buf.size() != header + count * record) {
    throw FormatError("truncated or oversized EVT1 payload: " + path.string());
  }
  const SensorSize sensor{static_cast<int>(width), static_cast<int>(height)};
  std::vector<Event> events;
  events.reserve(count);
  for (std::uint64_t i = 0; i < count; ++i) {
    Event e;
    e.t = get<double>(buf, off);
    e.x = get<std::uint16_t>(buf, off);
    e.y = get<std::uint16_t>(buf, off);
    const auto p = get<std::int8_t>(buf, off);
    e.p = p > 0 ? 1 : -1;
    if (!sensor.contains(e.x, e.y)) {
      throw FormatError("EVT1 record " + std::to_string(i) + " outside the sensor");
    }
    events.push_back(e);
  }
  if (events.empty()) throw ValidationError("no events in " + path.string());
  return EventSet(std::move(events), sensor);
}

void write_events_binary(const fs::path& path, const EventSet& events) {
  std::string buf = "EVT1";
  put<std::uint32_t>(buf, static_cast<std::uint32_t>(events.sensor().width));
  put<std::uint32_t>(buf, static_cast<std::uint32_t>(events.sensor().height));
  put<std::uint64_t>(buf, events.size());
  for (const Event& e : events.events()) {
    put<double>(buf, e.t);
    put<std::uint16_t>(buf, static_cast<std::uint16_t>(e.x));
    put<std::uint16_t>(buf, static_cast<std::uint16_t>(e.y));
    put<std::int8_t>(buf, static_cast<std::int8_t>(e.p));
  }
  auto out = open_out(path, std::ios::binary);
  out.write(buf.data(), static_cast<std::streamsize>(buf.size()));
  if (!out) throw Error("write failed: " + path.string());
}

EventSet read_events(const fs::path& path, SensorSize sensor) {
  std::array<char, 4> magic{};
  {
    auto in = open_in(path, std::ios::binary);
    in.read(magic.data(), magic.size());
  }
  if (std::string_view(magic.data(), magic.size()) == "EVT1") {
    EventSet set = read_events_binary(path);
    if (set.sensor() != sensor) {
      throw ValidationError("EVT1 sensor size does not match the calibration");
    }
    return set;
  }
  return read_events_csv(path, sensor);
}

// ----------------------------------------------------------- calibration

CameraModel read_calibration(const fs::path& path) {
  nlohmann::json j;
  try {
    auto in = open_in(path);
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError("calibration: " + std::string(e.what()));
  }
  if (!j.is_object()) throw ValidationError("calibration: expected a JSON object");
  const double fx = require_number(j, "fx");
  const double fy = require_number(j, "fy");
  const double cx = require_number(j, "cx");
  const double cy = require_number(j, "cy");
  const double width = require_number(j, "width");
  const double height = require_number(j, "height");
  if (width != std::floor(width) || height != std::floor(height)) {
    throw ValidationError("calibration: width and height must be integers");
  }
  Distortion dist;
  if (j.contains("dist")) {
    const auto& d = j.at("dist");
    if (!d.is_array() || d.size() != 5) {
      throw ValidationError("calibration: 'dist' must be an array of 5 numbers (k1, k2, p1, p2, k3)");
    }
    for (const auto& c : d) {
      if (!c.is_number()) throw ValidationError("calibration: 'dist' entries must be numbers");
    }
    dist = {d[0].get<double>(), d[1].get<double>(), d[2].get<double>(), d[3].get<double>(),
            d[4].get<double>()};
  }
  return CameraModel(fx, fy, cx, cy, {static_cast<int>(width), static_cast<int>(height)}, dist);
}

void write_calibration(const fs::path& path, const CameraModel& cam) {
  const Distortion& d = cam.distortion();
  nlohmann::json j = {{"fx", cam.fx()},
                      {"fy", cam.fy()},
                      {"cx", cam.cx()},
                      {"cy", cam.cy()},
                      {"width", cam.sensor().width},
                      {"height", cam.sensor().height},
                      {"dist", {d.k1, d.k2, d.p1, d.p2, d.k3}}};
  auto out = open_out(path);
  out << j.dump(2) << '\n';
}

// ------------------------------------------------------------------ flow

void write_flow(const fs::path& path, const FlowField& flow) {
  const SensorSize s = flow.sensor();
  if (flow.v.width() != s.width || flow.v.height() != s.height ||
      flow.valid.width() != s.width || flow.valid.height() != s.height) {
    throw ValidationError("flow channels have mismatched dimensions");
  }
  std::string buf;
  buf.reserve(12 + s.area() * 8);
  put<float>(buf, kFlowMagic);
  put<std::int32_t>(buf, s.width);
  put<std::int32_t>(buf, s.height);
  for (int y = 0; y < s.height; ++y) {
    for (int x = 0; x < s.width; ++x) {
      const bool ok = flow.valid(x, y) != 0;
      put<float>(buf, ok ? flow.u(x, y) : kFlowInvalid);
      put<float>(buf, ok ? flow.v(x, y) : kFlowInvalid);
    }
  }
  auto out = open_out(path, std::ios::binary);
  out.write(buf.data(), static_cast<std::streamsize>(buf.size()));
  if (!out) throw Error("write failed: " + path.string());
}

FlowField read_flow(const fs::path& path) {
  const std::string buf = slurp(path);
  if (buf.size() < 12) throw FormatError("flow file too short: " + path.string());
  std::size_t off = 0;
  const float magic = get<float>(buf, off);
  if (magic != kFlowMagic) throw FormatError("bad flow magic in " + path.string());
  const auto width = get<std::int32_t>(buf, off);
  const auto height = get<std::int32_t>(buf, off);
  if (width < 1 || height < 1 || width > 100000 || height > 100000) {
    throw FormatError("implausible flow dimensions in " + path.string());
  }
  const SensorSize s{width, height};
  if (buf.size() != 12 + s.area() * 8) {
    throw FormatError("truncated flow payload in " + path.string());
  }
  FlowField flow(s);
  for (int y = 0; y < height; ++y) {
    for (int x = 0; x < width; ++x) {
      const float u = get<float>(buf, off);
      const float v = get<float>(buf, off);
      if (std::fabs(u) >= kFlowInvalid || std::fabs(v) >= kFlowInvalid || !std::isfinite(u) ||
          !std::isfinite(v)) {
        flow.valid(x, y) = 0;
      } else {
        flow.u(x, y) = u;
        flow.v(x, y) = v;
      }
    }
  }
  return flow;
}

// -------------------------------------------------------------- velocity

std::vector<VelocitySample> read_velocity_csv(const fs::path& path) {
  auto in = open_in(path);
  std::vector<VelocitySample> out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto body = trim(line);
    if (body.empty() || body.front() == '#') continue;
    if (body.front() == 't') continue;  // header
    const auto fields = split(body, ',');
    if (fields.size() != 7) {
      throw ParseError("expected 7 fields t,vx,vy,vz,wx,wy,wz", line_no);
    }
    std::array<double, 7> vals{};
    for (std::size_t i = 0; i < 7; ++i) {
      if (!parse_number(fields[i], vals[i]) || !std::isfinite(vals[i])) {
        throw ParseError("bad number '" + std::string(trim(fields[i])) + "'", line_no);
      }
    }
    if (!out.empty() && vals[0] < out.back().t) {
      throw ParseError("velocity timestamps must be non-decreasing", line_no);
    }
    out.push_back({vals[0], {vals[1], vals[2], vals[3]}, {vals[4], vals[5], vals[6]}});
  }
  if (out.empty()) throw ValidationError("no velocity samples in " + path.string());
  return out;
}

void write_velocity_csv(const fs::path& path, const std::vector<VelocitySample>& samples) {
  auto out = open_out(path);
  out << "t,vx,vy,vz,wx,wy,wz\n" << std::setprecision(17);
  for (const auto& s : samples) {
    out << s.t << ',' << s.v.x() << ',' << s.v.y() << ',' << s.v.z() << ',' << s.w.x() << ','
        << s.w.y() << ',' << s.w.z() << '\n';
  }
  if (!out) throw Error("write failed: " + path.string());
}

VelocitySample interpolate_velocity(const std::vector<VelocitySample>& trace, double t) {
  if (trace.empty()) throw ValidationError("empty velocity trace");
  if (t <= trace.front().t) return {t, trace.front().v, trace.front().w};
  if (t >= trace.back().t) return {t, trace.back().v, trace.back().w};
  const auto hi = std::upper_bound(trace.begin(), trace.end(), t,
                                   [](double value, const VelocitySample& s) { return value < s.t; });
  const auto lo = hi - 1;
  const double span = hi->t - lo->t;
  const double a = span > 0.0 ? (t - lo->t) / span : 0.0;
  return {t, (1.0 - a) * lo->v + a * hi->v, (1.0 - a) * lo->w + a * hi->w};
}

// ------------------------------------------------------------- EventSet

EventSet::EventSet(std::vector<Event> events, SensorSize sensor)
    : events_(std::move(events)), sensor_(sensor) {
  if (!events_.empty()) {
    t_start_ = events_.front().t;
    t_end_ = events_.back().t;
  }
  validate();
}

EventSet::EventSet(std::vector<Event> events, SensorSize sensor, double t_start, double t_end)
    : events_(std::move(events)), sensor_(sensor), t_start_(t_start), t_end_(t_end) {
  validate();
}

void EventSet::validate() const {
  if (sensor_.width <= 0 || sensor_.height <= 0) {
    throw ValidationError("sensor size must be positive");
  }
  if (!std::isfinite(t_start_) || !std::isfinite(t_end_) || t_start_ > t_end_) {
    throw ValidationError("event window must satisfy t_start <= t_end");
  }
  for (std::size_t i = 0; i < events_.size(); ++i) {
    const Event& e = events_[i];
    if (!sensor_.contains(e.x, e.y)) {
      throw ValidationError("event " + std::to_string(i) + " outside the sensor");
    }
    if (e.p != 1 && e.p != -1) throw ValidationError("event polarity must be -1 or +1");
    if (!(e.t >= t_start_ && e.t <= t_end_)) {
      throw ValidationError("event " + std::to_string(i) + " outside the declared window");
    }
    if (i > 0 && e.t < events_[i - 1].t) {
      throw ValidationError("events must be sorted by timestamp");
    }
  }
}

EventSet EventSet::slice_time(double t0, double t1) const {
  const auto lo = std::lower_bound(events_.begin(), events_.end(), t0,
                                   [](const Event& e, double t) { return e.t < t; });
  const auto hi = std::upper_bound(lo, events_.end(), t1,
                                   [](double t, const Event& e) { return t < e.t; });
  return EventSet(std::vector<Event>(lo, hi), sensor_, t0, t1);
}

EventSet EventSet::slice_count(double t0, std::size_t count) const {
  const auto lo = std::lower_bound(events_.begin(), events_.end(), t0,
                                   [](const Event& e, double t) { return e.t < t; });
  const auto available = static_cast<std::size_t>(events_.end() - lo);
  const auto hi = lo + static_cast<std::ptrdiff_t>(std::min(count, available));
  if (lo == hi) return EventSet({}, sensor_, t0, t0);
  return EventSet(std::vector<Event>(lo, hi), sensor_, t0, (hi - 1)->t);
}

}  // namespace opcm
