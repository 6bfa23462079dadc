#include "rclio/io.hpp"

#include "rclio/config.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <sstream>

namespace rclio::io {

namespace {

constexpr std::size_t kRecordBytes = 24;

std::ifstream open_in(const std::filesystem::path& path, std::ios::openmode mode = std::ios::in) {
  std::ifstream in(path, mode);
  if (!in) throw FormatError("cannot open " + path.string());
  return in;
}

std::ofstream open_out(const std::filesystem::path& path, std::ios::openmode mode = std::ios::out) {
  std::ofstream out(path, mode);
  if (!out) throw FormatError("cannot write " + path.string());
  return out;
}

template <typename T>
void put_le(std::string& buf, T value) {
  unsigned char bytes[sizeof(T)];
  std::memcpy(bytes, &value, sizeof(T));
  if constexpr (std::endian::native == std::endian::big) std::reverse(bytes, bytes + sizeof(T));
  buf.append(reinterpret_cast<const char*>(bytes), sizeof(T));
}

template <typename T>
T get_le(const char* src) {
  unsigned char bytes[sizeof(T)];
  std::memcpy(bytes, src, sizeof(T));
  if constexpr (std::endian::native == std::endian::big) std::reverse(bytes, bytes + sizeof(T));
  T value;
  std::memcpy(&value, bytes, sizeof(T));
  return value;
}

std::vector<double> split_numbers(const std::string& line, char sep, std::size_t expected,
                                  const std::filesystem::path& path, std::size_t line_no) {
  std::vector<double> out;
  out.reserve(expected);
  const char* p = line.c_str();
  const char* end = p + line.size();
  while (p < end) {
    while (p < end && (*p == ' ' || *p == '\t' || *p == '\r' || *p == sep)) ++p;
    if (p >= end) break;
    char* next = nullptr;
    const double v = std::strtod(p, &next);
    if (next == p) {
      throw FormatError(path.string() + ":" + std::to_string(line_no) + ": not a number");
    }
    out.push_back(v);
    p = next;
  }
  if (out.size() != expected) {
    throw FormatError(path.string() + ":" + std::to_string(line_no) + ": expected " +
                      std::to_string(expected) + " fields, got " + std::to_string(out.size()));
  }
  for (double v : out) {
    if (!std::isfinite(v)) {
      throw FormatError(path.string() + ":" + std::to_string(line_no) + ": non-finite value");
    }
  }
  return out;
}

bool is_header(const std::string& line) {
  for (char c : line) {
    if (c == ' ' || c == '\t') continue;
    return std::isalpha(static_cast<unsigned char>(c)) != 0;
  }
  return false;
}

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), f, v);
  return buf;
}

std::vector<LidarScan> group_scans(std::vector<TimedPoint> points, double period, double t0,
                                   const std::filesystem::path& path) {
  if (!(period > 0.0)) throw FormatError("scan period must be positive");
  for (std::size_t i = 1; i < points.size(); ++i) {
    if (points[i].timestamp < points[i - 1].timestamp) {
      throw FormatError(path.string() + ": point timestamps are not sorted");
    }
  }
  std::vector<LidarScan> scans;
  long long current = -1;
  for (const TimedPoint& p : points) {
    const auto k = static_cast<long long>(std::floor((p.timestamp - t0) / period + 1e-9));
    if (k < 0) throw FormatError(path.string() + ": point before sequence start");
    if (k != current) {
      LidarScan s;
      s.t_start = t0 + static_cast<double>(k) * period;
      s.t_end = t0 + static_cast<double>(k + 1) * period;
      scans.push_back(std::move(s));
      current = k;
    }
    scans.back().points.push_back(p);
  }
  return scans;
}

}  // namespace

void write_imu_csv(const std::filesystem::path& path, const std::vector<ImuSample>& imu) {
  auto out = open_out(path);
  out << "t,ax,ay,az,gx,gy,gz\n";
  for (const ImuSample& s : imu) {
    out << fmt("%.17g", s.timestamp);
    for (int i = 0; i < 3; ++i) out << ',' << fmt("%.17g", s.accel(i));
    for (int i = 0; i < 3; ++i) out << ',' << fmt("%.17g", s.gyro(i));
    out << '\n';
  }
}

std::vector<ImuSample> read_imu_csv(const std::filesystem::path& path) {
  auto in = open_in(path);
  std::vector<ImuSample> out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || line[0] == '#' || (line_no == 1 && is_header(line))) continue;
    const auto v = split_numbers(line, ',', 7, path, line_no);
    ImuSample s;
    s.timestamp = v[0];
    s.accel = Vec3(v[1], v[2], v[3]);
    s.gyro = Vec3(v[4], v[5], v[6]);
    if (!out.empty() && !(s.timestamp > out.back().timestamp)) {
      throw FormatError(path.string() + ":" + std::to_string(line_no) +
                        ": IMU timestamps must increase");
    }
    out.push_back(s);
  }
  return out;
}

void write_lidar_binary(const std::filesystem::path& path, const std::vector<LidarScan>& scans) {
  auto out = open_out(path, std::ios::out | std::ios::binary);
  std::string buf;
  for (const LidarScan& s : scans) {
    buf.clear();
    buf.reserve(s.points.size() * kRecordBytes);
    for (const TimedPoint& p : s.points) {
      put_le<double>(buf, p.timestamp);
      put_le<float>(buf, static_cast<float>(p.position.x()));
      put_le<float>(buf, static_cast<float>(p.position.y()));
      put_le<float>(buf, static_cast<float>(p.position.z()));
      put_le<float>(buf, p.intensity);
    }
    out.write(buf.data(), static_cast<std::streamsize>(buf.size()));
  }
}

void write_lidar_csv(const std::filesystem::path& path, const std::vector<LidarScan>& scans) {
  auto out = open_out(path);
  out << "t,x,y,z,intensity\n";
  for (const LidarScan& s : scans) {
    for (const TimedPoint& p : s.points) {
      // Same float32 precision as the binary records.
      out << fmt("%.17g", p.timestamp) << ',' << fmt("%.9g", static_cast<float>(p.position.x()))
          << ',' << fmt("%.9g", static_cast<float>(p.position.y())) << ','
          << fmt("%.9g", static_cast<float>(p.position.z())) << ',' << fmt("%.9g", p.intensity)
          << '\n';
    }
  }
}

std::vector<LidarScan> read_lidar(const std::filesystem::path& path, double scan_period,
                                  double t0) {
  std::vector<TimedPoint> points;
  if (path.extension() == ".bin") {
    auto in = open_in(path, std::ios::in | std::ios::binary);
    std::stringstream ss;
    ss << in.rdbuf();
    const std::string data = ss.str();
    if (data.size() % kRecordBytes != 0) {
      throw FormatError(path.string() + ": truncated record stream");
    }
    points.reserve(data.size() / kRecordBytes);
    for (std::size_t off = 0; off < data.size(); off += kRecordBytes) {
      const char* r = data.data() + off;
      TimedPoint p;
      p.timestamp = get_le<double>(r);
      p.position = Vec3(get_le<float>(r + 8), get_le<float>(r + 12), get_le<float>(r + 16));
      p.intensity = get_le<float>(r + 20);
      if (!std::isfinite(p.timestamp) || !p.position.allFinite()) {
        throw FormatError(path.string() + ": non-finite record");
      }
      points.push_back(p);
    }
  } else if (path.extension() == ".csv") {
    auto in = open_in(path);
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
      ++line_no;
      if (line.empty() || line[0] == '#' || (line_no == 1 && is_header(line))) continue;
      const auto v = split_numbers(line, ',', 5, path, line_no);
      // Round through float32 so both formats load identically.
      points.push_back({v[0],
                        Vec3(static_cast<float>(v[1]), static_cast<float>(v[2]),
                             static_cast<float>(v[3])),
                        static_cast<float>(v[4])});
    }
  } else {
    throw FormatError(path.string() + ": lidar file must end in .bin or .csv");
  }
  return group_scans(std::move(points), scan_period, t0, path);
}

void write_tum(const std::filesystem::path& path, const Trajectory& traj) {
  auto out = open_out(path);
  for (const StampedPose& s : traj) {
    const Quat q = s.attitude.normalized();
    out << fmt("%.9f", s.timestamp) << ' ' << fmt("%.9f", s.position.x()) << ' '
        << fmt("%.9f", s.position.y()) << ' ' << fmt("%.9f", s.position.z()) << ' '
        << fmt("%.9f", q.x()) << ' ' << fmt("%.9f", q.y()) << ' ' << fmt("%.9f", q.z()) << ' '
        << fmt("%.9f", q.w()) << '\n';
  }
}

Trajectory read_tum(const std::filesystem::path& path) {
  auto in = open_in(path);
  Trajectory out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || line[0] == '#') continue;
    const auto v = split_numbers(line, ' ', 8, path, line_no);
    const Quat q(v[7], v[4], v[5], v[6]);
    if (!(q.norm() > 0.0)) {
      throw FormatError(path.string() + ":" + std::to_string(line_no) + ": zero quaternion");
    }
    if (!out.empty() && !(v[0] > out.back().timestamp)) {
      throw FormatError(path.string() + ":" + std::to_string(line_no) +
                        ": timestamps must increase");
    }
    out.push_back({v[0], Vec3(v[1], v[2], v[3]), q.normalized()});
  }
  return out;
}

Trajectory ground_truth_trajectory(const sim::GroundTruth& gt) {
  Trajectory out;
  out.reserve(gt.samples().size());
  for (const sim::GroundTruthSample& s : gt.samples()) {
    out.push_back({s.timestamp, s.position, s.attitude});
  }
  return out;
}

void write_sequence(const std::filesystem::path& dir, const sim::SimSequence& seq,
                    const std::string& scenario, bool lidar_csv) {
  std::filesystem::create_directories(dir);
  SequenceMeta meta;
  meta.scan_period = seq.sensors.lidar.scan_period;
  meta.t0 = seq.scans.empty() ? 0.0 : seq.scans.front().t_start;
  meta.lidar_file = lidar_csv ? "lidar.csv" : "lidar.bin";
  meta.scenario = scenario;
  meta.seed = seq.seed;

  write_imu_csv(dir / meta.imu_file, seq.imu);
  if (lidar_csv) {
    write_lidar_csv(dir / meta.lidar_file, seq.scans);
  } else {
    write_lidar_binary(dir / meta.lidar_file, seq.scans);
  }
  write_tum(dir / meta.ground_truth_file, ground_truth_trajectory(seq.ground_truth));

  auto out = open_out(dir / "sequence.meta");
  out << "scan_period = " << fmt("%.17g", meta.scan_period) << '\n'
      << "t0 = " << fmt("%.17g", meta.t0) << '\n'
      << "lidar_file = " << meta.lidar_file << '\n'
      << "imu_file = " << meta.imu_file << '\n'
      << "ground_truth_file = " << meta.ground_truth_file << '\n'
      << "scenario = " << meta.scenario << '\n'
      << "seed = " << meta.seed << '\n';
}

SequenceMeta read_meta(const std::filesystem::path& dir) {
  auto in = open_in(dir / "sequence.meta");
  std::stringstream ss;
  ss << in.rdbuf();
  std::map<std::string, std::string> kv;
  try {
    kv = parse_key_values(ss.str());
  } catch (const ConfigError& e) {
    throw FormatError(std::string("sequence.meta: ") + e.what());
  }
  SequenceMeta meta;
  for (const auto& [k, v] : kv) {
    try {
      if (k == "scan_period") {
        meta.scan_period = std::stod(v);
      } else if (k == "t0") {
        meta.t0 = std::stod(v);
      } else if (k == "lidar_file") {
        meta.lidar_file = v;
      } else if (k == "imu_file") {
        meta.imu_file = v;
      } else if (k == "ground_truth_file") {
        meta.ground_truth_file = v;
      } else if (k == "scenario") {
        meta.scenario = v;
      } else if (k == "seed") {
        meta.seed = std::stoull(v);
      } else {
        throw FormatError("sequence.meta: unknown key '" + k + "'");
      }
    } catch (const std::logic_error&) {
      throw FormatError("sequence.meta: bad value for '" + k + "'");
    }
  }
  if (!(meta.scan_period > 0.0)) throw FormatError("sequence.meta: scan_period must be positive");
  return meta;
}

SensorData read_sequence(const std::filesystem::path& dir, SequenceMeta* meta_out) {
  const SequenceMeta meta = read_meta(dir);
  SensorData data;
  data.imu = read_imu_csv(dir / meta.imu_file);
  data.scans = read_lidar(dir / meta.lidar_file, meta.scan_period, meta.t0);
  if (meta_out != nullptr) *meta_out = meta;
  return data;
}

}  // namespace rclio::io
