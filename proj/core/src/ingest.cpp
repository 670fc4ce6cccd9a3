#include <spdlog/spdlog.h>

#include <algorithm>
#include <array>
#include <cmath>
#include <fstream>
#include <map>
#include <set>

#include "gexse/data.hpp"
#include "gexse/error.hpp"
#include "gexse/parallel.hpp"
#include "text_parse.hpp"

namespace gexse {

namespace fs = std::filesystem;

std::vector<std::string> ucihar_label_names() {
    return {"walking", "walking_upstairs", "walking_downstairs", "sitting", "standing", "laying"};
}

std::vector<std::string> pamap2_label_names() {
    return {"lying",          "sitting",          "standing",          "walking",
            "running",        "cycling",          "nordic_walking",    "ascending_stairs",
            "descending_stairs", "vacuum_cleaning", "ironing",          "rope_jumping"};
}

const std::vector<int>& pamap2_activity_ids() {
    static const std::vector<int> ids{1, 2, 3, 4, 5, 6, 7, 12, 13, 16, 17, 24};
    return ids;
}

std::vector<std::string> opportunity_label_names() {
    return {"open_door_1",   "open_door_2",   "close_door_1",       "close_door_2",      "open_fridge",
            "close_fridge",  "open_dishwasher", "close_dishwasher", "open_drawer_1",     "close_drawer_1",
            "open_drawer_2", "close_drawer_2", "open_drawer_3",     "close_drawer_3",    "clean_table",
            "drink_from_cup", "toggle_switch"};
}

const std::vector<int>& opportunity_gesture_codes() {
    static const std::vector<int> codes{406516, 406517, 404516, 404517, 406520, 404520, 406505, 404505, 406519,
                                        404519, 406511, 404511, 406508, 404508, 408512, 407521, 405506};
    return codes;
}

namespace {

// One continuous recording: model channels, per-row class (-1 = dropped),
// and auxiliary series summarized per window.
struct Stream {
    int subject = 0;
    std::size_t rows = 0;
    std::vector<std::vector<double>> channels;
    std::vector<int> labels;
    std::vector<std::vector<double>> aux;
};

void append_windows(WindowSet& ws, const Stream& s, std::size_t window, std::size_t stride) {
    std::vector<std::size_t> aux_groups;
    for (std::size_t g = 0; g < ws.channel_groups.size(); ++g) {
        if (ws.channel_groups[g].is_aux()) aux_groups.push_back(g);
    }
    for (const auto& run : label_runs(s.labels)) {
        for (auto start : window_starts(run.end - run.begin, window, stride)) {
            const std::size_t b = run.begin + start;
            for (const auto& ch : s.channels) ws.data.insert(ws.data.end(), ch.begin() + b, ch.begin() + b + window);
            ws.labels.push_back(run.label);
            ws.subjects.push_back(s.subject);
            for (std::size_t a = 0; a < aux_groups.size(); ++a) {
                double m = 0.0;
                for (std::size_t t = b; t < b + window; ++t) m += s.aux[a][t];
                ws.channel_groups[aux_groups[a]].per_window.push_back(m / static_cast<double>(window));
            }
        }
    }
}

void check_disjoint(const WindowSet& train, const WindowSet& test, const std::string& what) {
    std::set<int> tr(train.subjects.begin(), train.subjects.end());
    for (int s : test.subjects) {
        if (tr.count(s)) throw_data(what + ": subject " + std::to_string(s) + " appears in both train and test");
    }
}

void interpolate_or_throw(std::vector<double>& col, const std::string& what) {
    if (!interpolate_nan(col)) throw_data(what + " is NaN in every row");
}

// ---------------------------------------------------------------- PAMAP2

constexpr std::size_t kPamapColumns = 54;
constexpr std::size_t kPamapImuBase[3] = {3, 20, 37};
const char* const kPamapImuName[3] = {"hand", "chest", "ankle"};

fs::path pamap2_dir(const fs::path& root) {
    if (fs::is_directory(root / "Protocol")) return root / "Protocol";
    return root;
}

Stream parse_pamap2_subject(const fs::path& file, int subject) {
    const std::string text = textparse::read_file(file);
    const std::string name = file.string();
    std::map<int, int> class_of;
    for (std::size_t i = 0; i < pamap2_activity_ids().size(); ++i) class_of[pamap2_activity_ids()[i]] = static_cast<int>(i);
    static const std::set<int> dropped{0, 9, 10, 11, 18, 19, 20};

    Stream s;
    s.subject = subject;
    s.channels.assign(36, {});
    std::vector<double> hr;
    std::array<std::vector<double>, 3> temp;
    textparse::for_each_line(text, [&](std::string_view line, std::size_t lineno) {
        const auto tok = textparse::split_ws(line);
        if (tok.size() != kPamapColumns) {
            throw_data(name + ":" + std::to_string(lineno) + ": expected " + std::to_string(kPamapColumns) +
                       " columns, found " + std::to_string(tok.size()));
        }
        const long id = textparse::to_long(tok[1], name, lineno);
        if (auto it = class_of.find(static_cast<int>(id)); it != class_of.end()) {
            s.labels.push_back(it->second);
        } else if (dropped.count(static_cast<int>(id))) {
            s.labels.push_back(-1);
        } else {
            throw_data(name + ":" + std::to_string(lineno) + ": unknown activity ID " + std::to_string(id));
        }
        hr.push_back(textparse::to_double(tok[2], name, lineno));
        for (std::size_t imu = 0; imu < 3; ++imu) {
            const std::size_t base = kPamapImuBase[imu];
            temp[imu].push_back(textparse::to_double(tok[base], name, lineno));
            // acc16 (3), acc6 (3), gyro (3), magnetometer (3); orientation is invalid in this release
            for (std::size_t k = 0; k < 12; ++k) {
                s.channels[imu * 12 + k].push_back(textparse::to_double(tok[base + 1 + k], name, lineno));
            }
        }
    });
    s.rows = s.labels.size();
    for (std::size_t c = 0; c < 36; ++c) {
        interpolate_or_throw(s.channels[c], name + ": " + kPamapImuName[c / 12] + " channel " + std::to_string(c % 12));
    }
    interpolate_or_throw(hr, name + ": heart rate");
    std::vector<double> t_mean(s.rows, 0.0);
    for (std::size_t imu = 0; imu < 3; ++imu) {
        interpolate_or_throw(temp[imu], name + ": " + kPamapImuName[imu] + " temperature");
        for (std::size_t r = 0; r < s.rows; ++r) t_mean[r] += temp[imu][r] / 3.0;
    }
    s.aux = {std::move(hr), std::move(t_mean)};
    return s;
}

WindowSet pamap2_skeleton() {
    WindowSet ws;
    ws.dataset = DatasetId::pamap2;
    ws.channels = 36;
    ws.length = 256;
    ws.label_names = pamap2_label_names();
    ChannelGroup acc{"accelerometer", {}, {}}, gyro{"gyroscope", {}, {}}, mag{"magnetometer", {}, {}};
    for (std::size_t imu = 0; imu < 3; ++imu) {
        for (std::size_t k = 0; k < 6; ++k) acc.channels.push_back(imu * 12 + k);
        for (std::size_t k = 6; k < 9; ++k) gyro.channels.push_back(imu * 12 + k);
        for (std::size_t k = 9; k < 12; ++k) mag.channels.push_back(imu * 12 + k);
    }
    ws.channel_groups = {acc, gyro, mag, {"heart_rate", {}, {}}, {"temperature", {}, {}}};
    return ws;
}

// ---------------------------------------------------------------- UCI-HAR

fs::path ucihar_dir(const fs::path& root) {
    if (fs::is_directory(root / "train" / "Inertial Signals")) return root;
    if (fs::is_directory(root / "UCI HAR Dataset" / "train" / "Inertial Signals")) return root / "UCI HAR Dataset";
    throw_data(root.string() + ": no 'train/Inertial Signals' directory (expected the UCI HAR Dataset layout)");
}

std::vector<long> read_int_column(const fs::path& file) {
    const std::string text = textparse::read_file(file);
    std::vector<long> out;
    textparse::for_each_line(text, [&](std::string_view line, std::size_t lineno) {
        const auto tok = textparse::split_ws(line);
        if (tok.size() != 1) throw_data(file.string() + ":" + std::to_string(lineno) + ": expected one value per line");
        out.push_back(textparse::to_long(tok[0], file.string(), lineno));
    });
    return out;
}

WindowSet ucihar_split(const fs::path& dir, const std::string& split) {
    static const char* const kSignals[9] = {"body_acc_x", "body_acc_y", "body_acc_z", "body_gyro_x", "body_gyro_y",
                                            "body_gyro_z", "total_acc_x", "total_acc_y", "total_acc_z"};
    const fs::path base = dir / split;
    const auto y = read_int_column(base / ("y_" + split + ".txt"));
    const auto subj = read_int_column(base / ("subject_" + split + ".txt"));
    if (subj.size() != y.size()) {
        throw_data(base.string() + ": subject file has " + std::to_string(subj.size()) + " rows, label file has " +
                   std::to_string(y.size()));
    }
    const std::size_t w = y.size();
    WindowSet ws;
    ws.dataset = DatasetId::ucihar;
    ws.channels = 9;
    ws.length = 128;
    ws.label_names = ucihar_label_names();
    ws.channel_groups = {{"accelerometer", {0, 1, 2, 6, 7, 8}, {}}, {"gyroscope", {3, 4, 5}, {}}};
    ws.data.assign(w * 9 * 128, 0.0);
    parallel_for(9, [&](std::size_t c) {
        const fs::path file = base / "Inertial Signals" / (std::string(kSignals[c]) + "_" + split + ".txt");
        const std::string text = textparse::read_file(file);
        std::size_t row = 0;
        textparse::for_each_line(text, [&](std::string_view line, std::size_t lineno) {
            const auto tok = textparse::split_ws(line);
            if (tok.size() != 128) {
                throw_data(file.string() + ":" + std::to_string(lineno) + ": expected 128 readings, found " +
                           std::to_string(tok.size()));
            }
            if (row >= w) throw_data(file.string() + ": more rows than the label file (" + std::to_string(w) + ")");
            double* dst = ws.data.data() + (row * 9 + c) * 128;
            for (std::size_t t = 0; t < 128; ++t) dst[t] = textparse::to_double(tok[t], file.string(), lineno);
            ++row;
        });
        if (row != w) {
            throw_data(file.string() + ": " + std::to_string(row) + " rows but the label file has " + std::to_string(w));
        }
    });
    for (std::size_t i = 0; i < w; ++i) {
        if (y[i] < 1 || y[i] > 6) throw_data(base.string() + ": activity label " + std::to_string(y[i]) + " not in 1..6");
        ws.labels.push_back(static_cast<int>(y[i] - 1));
        ws.subjects.push_back(static_cast<int>(subj[i]));
    }
    for (double v : ws.data) {
        if (!std::isfinite(v)) throw_data(base.string() + ": non-finite reading in Inertial Signals");
    }
    return ws;
}

// ---------------------------------------------------------------- Opportunity

constexpr std::size_t kOppLabelColumn = 250;  // ML_Both_Arms, 1-based

fs::path opportunity_dir(const fs::path& root) {
    if (fs::is_directory(root / "dataset")) return root / "dataset";
    return root;
}

std::vector<fs::path> opportunity_files(const fs::path& dir, int subject) {
    std::vector<fs::path> out;
    const std::string prefix = "S" + std::to_string(subject) + "-";
    for (const auto& e : fs::directory_iterator(dir)) {
        const std::string n = e.path().filename().string();
        if (n.rfind(prefix, 0) == 0 && e.path().extension() == ".dat" &&
            (n.find("ADL") != std::string::npos || n.find("Drill") != std::string::npos)) {
            out.push_back(e.path());
        }
    }
    std::sort(out.begin(), out.end());
    return out;
}

Stream parse_opportunity_file(const fs::path& file, int subject, const std::vector<OpportunityChannel>& map) {
    const std::string text = textparse::read_file(file);
    const std::string name = file.string();
    std::map<long, int> class_of;
    for (std::size_t i = 0; i < opportunity_gesture_codes().size(); ++i) {
        class_of[opportunity_gesture_codes()[i]] = static_cast<int>(i);
    }
    Stream s;
    s.subject = subject;
    s.channels.assign(map.size(), {});
    std::size_t columns = 0;
    textparse::for_each_line(text, [&](std::string_view line, std::size_t lineno) {
        const auto tok = textparse::split_ws(line);
        if (columns == 0) {
            columns = tok.size();
            for (const auto& ch : map) {
                if (ch.column > columns) {
                    throw_data(name + ": channel map names column " + std::to_string(ch.column) + " but rows have " +
                               std::to_string(columns) + " columns");
                }
            }
            if (kOppLabelColumn > columns) throw_data(name + ": rows have no gesture label column");
        }
        if (tok.size() != columns) {
            throw_data(name + ":" + std::to_string(lineno) + ": expected " + std::to_string(columns) + " columns, found " +
                       std::to_string(tok.size()));
        }
        const long code = textparse::to_long(tok[kOppLabelColumn - 1], name, lineno);
        if (code == 0) {
            s.labels.push_back(-1);
        } else if (auto it = class_of.find(code); it != class_of.end()) {
            s.labels.push_back(it->second);
        } else {
            throw_data(name + ":" + std::to_string(lineno) + ": unknown gesture code " + std::to_string(code));
        }
        for (std::size_t c = 0; c < map.size(); ++c) {
            s.channels[c].push_back(textparse::to_double(tok[map[c].column - 1], name, lineno));
        }
    });
    s.rows = s.labels.size();
    for (std::size_t c = 0; c < map.size(); ++c) {
        interpolate_or_throw(s.channels[c], name + ": column " + std::to_string(map[c].column));
    }
    return s;
}

}  // namespace

TrainTest ingest_pamap2(const fs::path& root, const SplitSpec& split) {
    split.validate();
    const fs::path dir = pamap2_dir(root);
    std::vector<int> subjects(split.train_subjects.begin(), split.train_subjects.end());
    subjects.insert(subjects.end(), split.test_subjects.begin(), split.test_subjects.end());
    for (int s : subjects) {
        const fs::path f = dir / ("subject" + std::to_string(s) + ".dat");
        if (!fs::exists(f)) throw_data("PAMAP2: missing subject file " + f.string());
    }
    std::vector<Stream> streams(subjects.size());
    parallel_for(subjects.size(), [&](std::size_t i) {
        streams[i] = parse_pamap2_subject(dir / ("subject" + std::to_string(subjects[i]) + ".dat"), subjects[i]);
    });
    TrainTest out{pamap2_skeleton(), pamap2_skeleton()};
    for (const auto& s : streams) {
        append_windows(split.test_subjects.count(s.subject) ? out.test : out.train, s, 256, 128);
    }
    check_disjoint(out.train, out.test, "PAMAP2");
    out.train.validate();
    out.test.validate();
    spdlog::info("PAMAP2: {} train / {} test windows", out.train.size(), out.test.size());
    return out;
}

TrainTest ingest_ucihar(const fs::path& root) {
    const fs::path dir = ucihar_dir(root);
    TrainTest out{ucihar_split(dir, "train"), ucihar_split(dir, "test")};
    check_disjoint(out.train, out.test, "UCI-HAR");
    out.train.validate();
    out.test.validate();
    spdlog::info("UCI-HAR: {} train / {} test windows", out.train.size(), out.test.size());
    return out;
}

std::vector<OpportunityChannel> opportunity_default_channels() {
    std::vector<OpportunityChannel> m;
    auto add = [&](std::size_t first, std::size_t count, const char* group) {
        for (std::size_t i = 0; i < count; ++i) m.push_back({first + i, group});
    };
    // BACK, RUA, RLA, LUA, LLA: acc, gyro, magnetic (quaternions skipped)
    for (std::size_t base : {38, 51, 64, 77, 90}) {
        add(base, 3, "accelerometer");
        add(base + 3, 3, "gyroscope");
        add(base + 6, 3, "magnetometer");
    }
    // L-SHOE, R-SHOE: Euler, Nav_A, Body_A, AngVelBodyFrame, AngVelNavFrame, Compass
    for (std::size_t base : {103, 119}) {
        add(base, 3, "orientation");
        add(base + 3, 6, "accelerometer");
        add(base + 9, 6, "gyroscope");
        add(base + 15, 1, "orientation");
    }
    return m;
}

std::vector<OpportunityChannel> read_channel_map(const fs::path& path) {
    const std::string text = textparse::read_file(path);
    std::vector<OpportunityChannel> m;
    textparse::for_each_line(text, [&](std::string_view line, std::size_t lineno) {
        if (auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
        const auto tok = textparse::split_ws(line);
        if (tok.empty()) return;
        if (tok.size() != 2) throw_data(path.string() + ":" + std::to_string(lineno) + ": expected '<column> <group>'");
        const long col = textparse::to_long(tok[0], path.string(), lineno);
        if (col < 1) throw_data(path.string() + ":" + std::to_string(lineno) + ": column indices are 1-based");
        m.push_back({static_cast<std::size_t>(col), std::string(tok[1])});
    });
    if (m.empty()) throw_data(path.string() + ": channel map selects no columns");
    return m;
}

void write_channel_map(const fs::path& path, const std::vector<OpportunityChannel>& map) {
    std::ofstream os(path);
    if (!os) throw_data("cannot write " + path.string());
    os << "# Opportunity column (1-based) and sensor group, one channel per line\n";
    for (const auto& c : map) os << c.column << ' ' << c.group << '\n';
}

TrainTest ingest_opportunity(const fs::path& root, const SplitSpec& split,
                             const std::vector<OpportunityChannel>& channel_map) {
    split.validate();
    if (channel_map.empty()) throw_usage("Opportunity: empty channel map");
    const fs::path dir = opportunity_dir(root);
    if (!fs::is_directory(dir)) throw_data("Opportunity: " + dir.string() + " is not a directory");

    struct Job {
        fs::path file;
        int subject;
    };
    std::vector<Job> jobs;
    std::vector<int> subjects(split.train_subjects.begin(), split.train_subjects.end());
    subjects.insert(subjects.end(), split.test_subjects.begin(), split.test_subjects.end());
    for (int s : subjects) {
        const auto files = opportunity_files(dir, s);
        if (files.empty()) throw_data("Opportunity: no S" + std::to_string(s) + "-ADL*/Drill .dat files in " + dir.string());
        for (const auto& f : files) jobs.push_back({f, s});
    }
    std::vector<Stream> streams(jobs.size());
    parallel_for(jobs.size(),
                 [&](std::size_t i) { streams[i] = parse_opportunity_file(jobs[i].file, jobs[i].subject, channel_map); });

    WindowSet skel;
    skel.dataset = DatasetId::opportunity;
    skel.channels = channel_map.size();
    skel.length = 90;
    skel.label_names = opportunity_label_names();
    for (std::size_t c = 0; c < channel_map.size(); ++c) {
        auto it = std::find_if(skel.channel_groups.begin(), skel.channel_groups.end(),
                               [&](const ChannelGroup& g) { return g.name == channel_map[c].group; });
        if (it == skel.channel_groups.end()) {
            skel.channel_groups.push_back({channel_map[c].group, {}, {}});
            it = skel.channel_groups.end() - 1;
        }
        it->channels.push_back(c);
    }
    TrainTest out{skel, skel};
    for (const auto& s : streams) append_windows(split.test_subjects.count(s.subject) ? out.test : out.train, s, 90, 45);
    check_disjoint(out.train, out.test, "Opportunity");
    out.train.validate();
    out.test.validate();
    spdlog::info("Opportunity: {} train / {} test windows", out.train.size(), out.test.size());
    return out;
}

}  // namespace gexse
