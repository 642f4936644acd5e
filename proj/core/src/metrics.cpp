#include "harmony/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <iomanip>
#include <set>
#include <sstream>

#include "harmony/dataset.hpp"
#include "harmony/errors.hpp"
#include "harmony/image.hpp"

namespace harmony {

namespace {

void check_same_shape(const torch::Tensor& a, const torch::Tensor& b, const char* who) {
    if (!a.sizes().equals(b.sizes())) throw ParamError(std::string(who) + ": shape mismatch");
}

constexpr double kPsnrCap = 100.0;
constexpr double kMseFloor = 255.0 * 255.0 * 1e-10;

}  // namespace

double mse(const torch::Tensor& pred, const torch::Tensor& gt) {
    check_same_shape(pred, gt, "mse");
    torch::Tensor d = pred.to(torch::kFloat64) - gt.to(torch::kFloat64);
    return d.pow(2).mean().item<double>();
}

double psnr_from_mse(double mse_value) {
    if (mse_value < 0.0) throw ParamError("psnr: negative mse");
    if (mse_value < kMseFloor) return kPsnrCap;
    return 10.0 * std::log10(255.0 * 255.0 / mse_value);
}

double psnr(const torch::Tensor& pred, const torch::Tensor& gt) {
    return psnr_from_mse(mse(pred, gt));
}

double fmse(const torch::Tensor& pred, const torch::Tensor& gt, const torch::Tensor& mask) {
    check_same_shape(pred, gt, "fmse");
    if (mask.dim() != pred.dim() || mask.size(-1) != pred.size(-1) ||
        mask.size(-2) != pred.size(-2))
        throw ParamError("fmse: mask spatial size mismatch");
    torch::Tensor m = mask.to(torch::kFloat64);
    if (!((m == 0.0).logical_or(m == 1.0)).all().item<bool>())
        throw ParamError("fmse: mask must be binary");
    const double fg = m.sum().item<double>();
    if (fg == 0.0) throw ValidationError("fmse: empty mask");
    torch::Tensor d = pred.to(torch::kFloat64) - gt.to(torch::kFloat64);
    const double num = (d.pow(2) * m).sum().item<double>();
    return num / (3.0 * fg);
}

EvalRecord evaluate_sample(const torch::Tensor& pred, const torch::Tensor& gt,
                           const torch::Tensor& mask, const std::string& id,
                           const std::string& subset, double foreground_ratio, uint64_t seed,
                           const MetricOptions& options) {
    const int64_t r = options.eval_resolution;
    torch::Tensor p = resize_bicubic(pred, r, r).clamp(0.0, 1.0) * 255.0;
    torch::Tensor g = resize_bicubic(gt, r, r).clamp(0.0, 1.0) * 255.0;
    torch::Tensor m = resize_nearest(mask, r, r);
    if (options.round_to_int) {
        p = p.round();
        g = g.round();
    }
    EvalRecord rec;
    rec.id = id;
    rec.subset = subset;
    rec.seed = seed;
    rec.foreground_ratio = foreground_ratio;
    rec.mse = mse(p, g);
    rec.psnr = psnr_from_mse(rec.mse);
    rec.fmse = fmse(p, g, m);
    return rec;
}

namespace {

struct Accum {
    int64_t n = 0;
    double psnr = 0.0, mse = 0.0, fmse = 0.0;
    void add(const EvalRecord& r) {
        ++n;
        psnr += r.psnr;
        mse += r.mse;
        fmse += r.fmse;
    }
    GroupStats stats() const {
        GroupStats g;
        g.count = n;
        if (n > 0) {
            g.psnr = psnr / n;
            g.mse = mse / n;
            g.fmse = fmse / n;
        }
        return g;
    }
};

SeedStats seed_stats(const std::vector<double>& means) {
    SeedStats s;
    const double n = static_cast<double>(means.size());
    for (double v : means) s.mean += v;
    s.mean /= n;
    if (means.size() > 1) {
        double acc = 0.0;
        for (double v : means) acc += (v - s.mean) * (v - s.mean);
        s.stddev = std::sqrt(acc / (n - 1.0));
    }
    return s;
}

}  // namespace

EvalReport aggregate(const std::vector<EvalRecord>& records) {
    if (records.empty()) throw ParamError("aggregate: no records");

    Accum overall;
    std::map<std::string, Accum> subsets, buckets;
    std::map<uint64_t, Accum> per_seed;
    for (const auto& r : records) {
        if (r.subset.empty())
            throw ValidationError("aggregate: record '" + r.id + "' has no subset");
        if (!(r.foreground_ratio > 0.0 && r.foreground_ratio <= 1.0))
            throw ValidationError("aggregate: record '" + r.id + "' has invalid foreground ratio");
        overall.add(r);
        subsets[r.subset].add(r);
        buckets[bucket_of(r.foreground_ratio)].add(r);
        per_seed[r.seed].add(r);
    }

    EvalReport rep;
    rep.overall = overall.stats();
    for (const auto& [k, v] : subsets) rep.per_subset[k] = v.stats();
    for (const auto& [k, v] : buckets) rep.per_bucket[k] = v.stats();
    rep.seed_count = static_cast<int64_t>(per_seed.size());
    if (rep.seed_count > 1) {
        std::vector<double> pm, mm, fm;
        for (const auto& [seed, acc] : per_seed) {
            GroupStats g = acc.stats();
            pm.push_back(g.psnr);
            mm.push_back(g.mse);
            fm.push_back(g.fmse);
        }
        rep.psnr_seeds = seed_stats(pm);
        rep.mse_seeds = seed_stats(mm);
        rep.fmse_seeds = seed_stats(fm);
    }
    return rep;
}

std::string format_mean_std(const SeedStats& stats) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.2f ± %.2f", stats.mean, stats.stddev);
    return buf;
}

namespace {

void print_row(std::ostream& os, const std::string& name, const GroupStats& g) {
    os << "  " << std::left << std::setw(12) << name << std::right << std::setw(6) << g.count
       << std::fixed << std::setprecision(2) << std::setw(10) << g.psnr << std::setw(12) << g.mse
       << std::setw(12) << g.fmse << "\n";
}

}  // namespace

std::string format_report(const EvalReport& report) {
    std::ostringstream os;
    os << std::fixed << std::setprecision(2);
    os << "overall: n=" << report.overall.count << "  PSNR " << report.overall.psnr << "  MSE "
       << report.overall.mse << "  fMSE " << report.overall.fmse << "\n";
    os << "per subset:\n  " << std::left << std::setw(12) << "subset" << std::right << std::setw(6)
       << "n" << std::setw(10) << "PSNR" << std::setw(12) << "MSE" << std::setw(12) << "fMSE"
       << "\n";
    for (const auto& [k, v] : report.per_subset) print_row(os, k, v);
    os << "per bucket:\n";
    for (const auto* name : kBucketNames) {
        auto it = report.per_bucket.find(name);
        if (it != report.per_bucket.end()) print_row(os, name, it->second);
    }
    if (report.seed_count > 1) {
        os << "seeds (" << report.seed_count << "): PSNR " << format_mean_std(report.psnr_seeds)
           << " | MSE " << format_mean_std(report.mse_seeds) << " | fMSE "
           << format_mean_std(report.fmse_seeds) << "\n";
    }
    return os.str();
}

std::string report_csv(const EvalReport& report) {
    std::ostringstream os;
    os << std::setprecision(12);
    os << "group,name,count,psnr,mse,fmse\n";
    auto row = [&](const char* group, const std::string& name, const GroupStats& g) {
        os << group << "," << name << "," << g.count << "," << g.psnr << "," << g.mse << ","
           << g.fmse << "\n";
    };
    row("overall", "all", report.overall);
    for (const auto& [k, v] : report.per_subset) row("subset", k, v);
    for (const auto& [k, v] : report.per_bucket) row("bucket", k, v);
    if (report.seed_count > 1) {
        os << "seed_summary,psnr," << report.seed_count << "," << report.psnr_seeds.mean << ","
           << report.psnr_seeds.stddev << ",\n";
        os << "seed_summary,mse," << report.seed_count << "," << report.mse_seeds.mean << ","
           << report.mse_seeds.stddev << ",\n";
        os << "seed_summary,fmse," << report.seed_count << "," << report.fmse_seeds.mean << ","
           << report.fmse_seeds.stddev << ",\n";
    }
    return os.str();
}

std::string records_csv(const std::vector<EvalRecord>& records) {
    std::ostringstream os;
    os << std::setprecision(12);
    os << "id,subset,seed,foreground_ratio,bucket,psnr,mse,fmse\n";
    for (const auto& r : records)
        os << r.id << "," << r.subset << "," << r.seed << "," << r.foreground_ratio << ","
           << bucket_of(r.foreground_ratio) << "," << r.psnr << "," << r.mse << "," << r.fmse
           << "\n";
    return os.str();
}

}  // namespace harmony
