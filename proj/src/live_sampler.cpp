#include <chrono>
#include <cstdlib>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <mutex>
#include <sstream>
#include <string>
#include <vector>

#include "hydra/error.hpp"
#include "hydra/trace.hpp"

#if defined(__linux__)
#include <linux/perf_event.h>
#include <sys/ioctl.h>
#include <sys/syscall.h>
#include <unistd.h>
#endif

namespace hydra {

namespace {

namespace fs = std::filesystem;

struct CpuTimes {
    unsigned long long user = 0, nice = 0, system = 0, idle = 0, iowait = 0, irq = 0, softirq = 0, steal = 0;
    unsigned long long total() const { return user + nice + system + idle + iowait + irq + softirq + steal; }
    unsigned long long busy() const { return total() - idle - iowait; }
};

struct ProcStat {
    CpuTimes cpu;
    unsigned long long interrupts = 0;
    unsigned long long soft_interrupts = 0;
};

ProcStat read_proc_stat() {
    std::ifstream in("/proc/stat");
    if (!in) throw SamplerError("cannot read /proc/stat (cpu_util_pct, user_time_pct, interrupts_per_s)");
    ProcStat st;
    bool have_cpu = false, have_intr = false, have_softirq = false;
    std::string line;
    while (std::getline(in, line)) {
        std::istringstream ls(line);
        std::string key;
        ls >> key;
        if (key == "cpu") {
            auto& c = st.cpu;
            ls >> c.user >> c.nice >> c.system >> c.idle >> c.iowait >> c.irq >> c.softirq >> c.steal;
            have_cpu = static_cast<bool>(ls) || ls.eof();
        } else if (key == "intr") {
            ls >> st.interrupts;
            have_intr = true;
        } else if (key == "softirq") {
            ls >> st.soft_interrupts;
            have_softirq = true;
        }
    }
    if (!have_cpu) throw SamplerError("/proc/stat has no aggregate cpu line (cpu_util_pct)");
    if (!have_intr) throw SamplerError("/proc/stat has no intr line (interrupts_per_s)");
    if (!have_softirq) throw SamplerError("/proc/stat has no softirq line (soft_interrupts_per_s)");
    return st;
}

struct MemInfo {
    double total_kb = 0, available_kb = 0, shmem_kb = 0;
};

MemInfo read_meminfo() {
    std::ifstream in("/proc/meminfo");
    if (!in) throw SamplerError("cannot read /proc/meminfo (virtual_mem_pct, shared_mem_bytes)");
    MemInfo m;
    bool total = false, avail = false, shmem = false;
    std::string key;
    double value = 0;
    std::string unit;
    std::string line;
    while (std::getline(in, line)) {
        std::istringstream ls(line);
        ls >> key >> value;
        if (key == "MemTotal:") m.total_kb = value, total = true;
        else if (key == "MemAvailable:") m.available_kb = value, avail = true;
        else if (key == "Shmem:") m.shmem_kb = value, shmem = true;
    }
    if (!total || !avail) throw SamplerError("/proc/meminfo lacks MemTotal/MemAvailable (virtual_mem_pct)");
    if (!shmem) throw SamplerError("/proc/meminfo lacks Shmem (shared_mem_bytes)");
    return m;
}

double read_cpu_freq_mhz() {
    double sum_khz = 0.0;
    int n = 0;
    std::error_code ec;
    for (const auto& entry : fs::directory_iterator("/sys/devices/system/cpu", ec)) {
        const auto name = entry.path().filename().string();
        if (name.rfind("cpu", 0) != 0 || name.size() <= 3 || !std::isdigit(static_cast<unsigned char>(name[3]))) continue;
        std::ifstream f(entry.path() / "cpufreq" / "scaling_cur_freq");
        double khz = 0;
        if (f >> khz) sum_khz += khz, ++n;
    }
    if (n > 0) return sum_khz / n / 1000.0;

    std::ifstream info("/proc/cpuinfo");
    std::string line;
    double sum = 0.0;
    while (std::getline(info, line)) {
        if (line.rfind("cpu MHz", 0) == 0) {
            const auto colon = line.find(':');
            if (colon != std::string::npos) sum += std::strtod(line.c_str() + colon + 1, nullptr), ++n;
        }
    }
    if (n > 0) return sum / n;
    throw SamplerError("no cpufreq nodes or 'cpu MHz' entries readable (cpu_freq_mhz)");
}

std::int64_t count_processes() {
    std::int64_t n = 0;
    std::error_code ec;
    for (const auto& entry : fs::directory_iterator("/proc", ec)) {
        const auto name = entry.path().filename().string();
        if (!name.empty() && std::all_of(name.begin(), name.end(), [](char c) { return c >= '0' && c <= '9'; })) ++n;
    }
    if (ec) throw SamplerError("cannot list /proc (process_count)");
    return n;
}

std::optional<double> read_meter() {
    const char* path = std::getenv("HYDRA_METER_FILE");
    if (path == nullptr || *path == '\0') return std::nullopt;
    std::ifstream in(path);
    if (!in) throw SamplerError(std::string("cannot read meter file ") + path + " (measured_power_watts)");
    std::string line, last;
    while (std::getline(in, line))
        if (!line.empty()) last = line;
    std::istringstream ls(last);
    double epoch = 0, watts = 0;
    if (!(ls >> epoch >> watts) || !(watts > 0.0))
        throw SamplerError(std::string("meter file ") + path + " has no valid '<epoch_s> <watts>' line");
    return watts;
}

#if defined(__linux__)
// System-wide hardware counters on every online CPU. Any failure disables the
// whole group.
class PerfCounters {
public:
    PerfCounters() {
        const long cpus = sysconf(_SC_NPROCESSORS_ONLN);
        for (long cpu = 0; cpu < cpus; ++cpu) {
            const int refs = open(PERF_COUNT_HW_CACHE_REFERENCES, static_cast<int>(cpu));
            const int misses = open(PERF_COUNT_HW_CACHE_MISSES, static_cast<int>(cpu));
            const int instr = open(PERF_COUNT_HW_INSTRUCTIONS, static_cast<int>(cpu));
            for (int fd : {refs, misses, instr}) fds_.push_back(fd);
            if (refs < 0 || misses < 0 || instr < 0) {
                close_all();
                return;
            }
        }
        available_ = !fds_.empty();
    }
    ~PerfCounters() { close_all(); }
    PerfCounters(const PerfCounters&) = delete;
    PerfCounters& operator=(const PerfCounters&) = delete;

    bool available() const { return available_; }

    // refs, misses, instructions summed across CPUs
    std::array<unsigned long long, 3> read() const {
        std::array<unsigned long long, 3> sums{};
        for (std::size_t i = 0; i < fds_.size(); ++i) {
            unsigned long long v = 0;
            if (::read(fds_[i], &v, sizeof v) == static_cast<ssize_t>(sizeof v)) sums[i % 3] += v;
        }
        return sums;
    }

private:
    static int open(unsigned long long config, int cpu) {
        perf_event_attr attr{};
        attr.type = PERF_TYPE_HARDWARE;
        attr.size = sizeof attr;
        attr.config = config;
        return static_cast<int>(syscall(SYS_perf_event_open, &attr, -1, cpu, -1, 0));
    }

    void close_all() {
        for (int fd : fds_)
            if (fd >= 0) ::close(fd);
        fds_.clear();
        available_ = false;
    }

    std::vector<int> fds_;
    bool available_ = false;
};
#else
class PerfCounters {
public:
    bool available() const { return false; }
    std::array<unsigned long long, 3> read() const { return {}; }
};
#endif

}  // namespace

struct LiveSampler::State {
    std::chrono::steady_clock::time_point start;
    std::chrono::steady_clock::time_point last;
    ProcStat last_stat;
    PerfCounters perf;
    std::array<unsigned long long, 3> last_perf{};
};

LiveSampler::LiveSampler() {
#if !defined(__linux__)
    throw SamplerError("live sampling is only supported on Linux");
#else
    state_ = std::make_unique<State>();
    state_->start = state_->last = std::chrono::steady_clock::now();
    state_->last_stat = read_proc_stat();
    if (state_->perf.available()) state_->last_perf = state_->perf.read();
#endif
}

LiveSampler::~LiveSampler() = default;

bool LiveSampler::hardware_counters() const noexcept { return state_ && state_->perf.available(); }

StatSample LiveSampler::sample() {
    auto& st = *state_;
    const auto now = std::chrono::steady_clock::now();
    const ProcStat cur = read_proc_stat();
    const MemInfo mem = read_meminfo();

    double dt = std::chrono::duration<double>(now - st.last).count();
    if (dt <= 0.0) dt = 1e-9;

    StatSample s;
    s.timestamp = std::chrono::duration<double>(now - st.start).count();
    s.cpu_freq_mhz = read_cpu_freq_mhz();

    const double total = static_cast<double>(cur.cpu.total() - st.last_stat.cpu.total());
    if (total > 0.0) {
        s.cpu_util_pct = std::clamp(100.0 * static_cast<double>(cur.cpu.busy() - st.last_stat.cpu.busy()) / total, 0.0, 100.0);
        const double user = static_cast<double>((cur.cpu.user + cur.cpu.nice) - (st.last_stat.cpu.user + st.last_stat.cpu.nice));
        s.user_time_pct = std::clamp(100.0 * user / total, 0.0, 100.0);
    }
    s.interrupts_per_s = static_cast<double>(cur.interrupts - st.last_stat.interrupts) / dt;
    s.soft_interrupts_per_s = static_cast<double>(cur.soft_interrupts - st.last_stat.soft_interrupts) / dt;
    s.process_count = count_processes();
    s.virtual_mem_pct = mem.total_kb > 0 ? std::clamp(100.0 * (mem.total_kb - mem.available_kb) / mem.total_kb, 0.0, 100.0) : 0.0;
    s.shared_mem_bytes = mem.shmem_kb * 1024.0;

    if (st.perf.available()) {
        const auto p = st.perf.read();
        const double refs = static_cast<double>(p[0] - st.last_perf[0]);
        const double misses = static_cast<double>(p[1] - st.last_perf[1]);
        s.cache_miss_ratio = refs > 0.0 ? std::clamp(misses / refs, 0.0, 1.0) : 0.0;
        s.instructions_per_s = static_cast<double>(p[2] - st.last_perf[2]) / dt;
        st.last_perf = p;
    }
    s.measured_power_watts = read_meter();

    st.last = now;
    st.last_stat = cur;
    validate_sample(s);
    return s;
}

StatSample live_sample() {
    static std::mutex mu;
    static std::unique_ptr<LiveSampler> sampler;
    std::lock_guard lock(mu);
    if (!sampler) sampler = std::make_unique<LiveSampler>();
    return sampler->sample();
}

}  // namespace hydra
