#include "harmony/image.hpp"

#include <opencv2/imgcodecs.hpp>
#include <opencv2/imgproc.hpp>

#include "harmony/errors.hpp"

namespace harmony {

namespace {

torch::Tensor mat_to_chw(const cv::Mat& bgr) {
    cv::Mat rgb;
    cv::cvtColor(bgr, rgb, cv::COLOR_BGR2RGB);
    cv::Mat f;
    rgb.convertTo(f, CV_32FC3, 1.0 / 255.0);
    torch::Tensor hwc = torch::from_blob(f.data, {f.rows, f.cols, 3}, torch::kFloat32).clone();
    return hwc.permute({2, 0, 1}).contiguous();
}

}  // namespace

torch::Tensor load_image(const std::string& path) {
    cv::Mat m = cv::imread(path, cv::IMREAD_COLOR);
    if (m.empty()) throw DataError("load_image: cannot read " + path);
    return mat_to_chw(m);
}

torch::Tensor load_mask(const std::string& path, int threshold) {
    cv::Mat m = cv::imread(path, cv::IMREAD_GRAYSCALE);
    if (m.empty()) throw DataError("load_mask: cannot read " + path);
    torch::Tensor t = torch::from_blob(m.data, {m.rows, m.cols}, torch::kUInt8).clone();
    return (t >= threshold).to(torch::kFloat32).unsqueeze(0);
}

void save_image(const std::string& path, const torch::Tensor& chw) {
    if (chw.dim() != 3 || chw.size(0) != 3)
        throw ParamError("save_image: expected 3xHxW tensor");
    torch::Tensor t = chw.detach().to(torch::kFloat32).clamp(0.0, 1.0).mul(255.0).round().to(torch::kUInt8);
    t = t.permute({1, 2, 0}).contiguous();  // HWC
    cv::Mat rgb(static_cast<int>(t.size(0)), static_cast<int>(t.size(1)), CV_8UC3, t.data_ptr());
    cv::Mat bgr;
    cv::cvtColor(rgb, bgr, cv::COLOR_RGB2BGR);
    if (!cv::imwrite(path, bgr)) throw DataError("save_image: cannot write " + path);
}

void save_mask(const std::string& path, const torch::Tensor& mask) {
    if (mask.dim() != 3 || mask.size(0) != 1)
        throw ParamError("save_mask: expected 1xHxW tensor");
    torch::Tensor t =
        mask.detach().to(torch::kFloat32).clamp(0.0, 1.0).mul(255.0).round().to(torch::kUInt8);
    t = t.squeeze(0).contiguous();
    cv::Mat gray(static_cast<int>(t.size(0)), static_cast<int>(t.size(1)), CV_8UC1, t.data_ptr());
    if (!cv::imwrite(path, gray)) throw DataError("save_mask: cannot write " + path);
}

namespace {

torch::Tensor resize_chw(const torch::Tensor& chw, int64_t height, int64_t width, int interp) {
    if (chw.dim() != 3) throw ParamError("resize: expected CHW tensor");
    if (height < 1 || width < 1) throw ParamError("resize: target size must be positive");
    torch::Tensor src = chw.detach().to(torch::kFloat32).contiguous();
    const int64_t c = src.size(0);
    std::vector<torch::Tensor> planes;
    planes.reserve(c);
    for (int64_t i = 0; i < c; ++i) {
        torch::Tensor p = src[i].contiguous();
        cv::Mat m(static_cast<int>(p.size(0)), static_cast<int>(p.size(1)), CV_32FC1, p.data_ptr());
        cv::Mat out;
        cv::resize(m, out, cv::Size(static_cast<int>(width), static_cast<int>(height)), 0, 0, interp);
        planes.push_back(torch::from_blob(out.data, {height, width}, torch::kFloat32).clone());
    }
    return torch::stack(planes, 0);
}

}  // namespace

torch::Tensor resize_bicubic(const torch::Tensor& chw, int64_t height, int64_t width) {
    if (chw.size(-2) == height && chw.size(-1) == width) return chw;
    return resize_chw(chw, height, width, cv::INTER_CUBIC);
}

torch::Tensor resize_nearest(const torch::Tensor& chw, int64_t height, int64_t width) {
    if (chw.size(-2) == height && chw.size(-1) == width) return chw;
    return resize_chw(chw, height, width, cv::INTER_NEAREST);
}

double foreground_ratio(const torch::Tensor& mask) {
    if (mask.numel() == 0) throw ParamError("foreground_ratio: empty mask");
    return mask.to(torch::kFloat64).mean().item<double>();
}

}  // namespace harmony
