#include "layoutflow/layout.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <random>
#include <sstream>

#include <json.hpp>

#include "layoutflow/errors.hpp"

namespace layoutflow {

int bits_for_categories(int count)
{
    if (count < 1) {
        throw DomainError("category count must be positive");
    }
    int bits = 1;
    while ((1 << bits) < count) {
        ++bits;
    }
    return bits;
}

CategorySet::CategorySet(std::vector<std::string> names)
    : m_names(std::move(names)), m_bits(bits_for_categories(static_cast<int>(m_names.size())))
{
}

CategorySet CategorySet::numbered(int count)
{
    std::vector<std::string> names;
    names.reserve(count);
    for (int i = 0; i < count; ++i) {
        names.push_back("c" + std::to_string(i));
    }
    return CategorySet(std::move(names));
}

FlowVector::FlowVector(int nmax, int bits)
    : data(static_cast<std::size_t>(nmax) * (kGeometryDims + bits), 0.0), pad_mask(nmax, false)
{
}

int FlowVector::real_count() const noexcept
{
    return static_cast<int>(std::count(pad_mask.begin(), pad_mask.end(), true));
}

void FlowVector::apply_padding() noexcept
{
    const int s = stride();
    for (int k = 0; k < nmax(); ++k) {
        if (!pad_mask[k]) {
            std::fill_n(slot(k), s, 0.0);
        }
    }
}

void Dataset::rebuild_histogram()
{
    element_histogram.assign(static_cast<std::size_t>(nmax) + 1, 0);
    for (const auto& l : layouts) {
        if (l.size() > static_cast<std::size_t>(nmax)) {
            throw CapacityError("layout exceeds dataset nmax");
        }
        ++element_histogram[l.size()];
    }
}

std::vector<double> encode_analog_bits(int category, int bits)
{
    if (bits < 1 || bits > 30 || category < 0 || category >= (1 << bits)) {
        throw DomainError("category " + std::to_string(category) + " not representable with " +
                          std::to_string(bits) + " bits");
    }
    std::vector<double> out(bits);
    for (int j = 0; j < bits; ++j) {
        const int bit = (category >> (bits - 1 - j)) & 1;
        out[j] = bit ? 1.0 : -1.0;
    }
    return out;
}

int decode_analog_bits(const double* values, int bits, int category_count)
{
    int value = 0;
    for (int j = 0; j < bits; ++j) {
        if (!std::isfinite(values[j])) {
            throw DomainError("non-finite analog bit");
        }
        value = (value << 1) | (values[j] >= 0.0 ? 1 : 0);
    }
    return std::clamp(value, 0, category_count - 1);
}

int decode_analog_bits(const std::vector<double>& values, int category_count)
{
    return decode_analog_bits(values.data(), static_cast<int>(values.size()), category_count);
}

FlowVector layout_to_vector(const Layout& layout, const CategorySet& categories, int nmax)
{
    if (layout.size() > static_cast<std::size_t>(nmax)) {
        throw CapacityError("layout has " + std::to_string(layout.size()) + " elements, nmax is " +
                            std::to_string(nmax));
    }
    const int bits = categories.bits();
    FlowVector x(nmax, bits);
    for (std::size_t k = 0; k < layout.size(); ++k) {
        const Element& e = layout.elements[k];
        double* s = x.slot(static_cast<int>(k));
        s[0] = e.cx;
        s[1] = e.cy;
        s[2] = e.w;
        s[3] = e.h;
        const auto code = encode_analog_bits(e.category, bits);
        std::copy(code.begin(), code.end(), s + kGeometryDims);
        x.pad_mask[k] = true;
    }
    return x;
}

Layout vector_to_layout(const FlowVector& x, const CategorySet& categories)
{
    Layout out;
    const int bits = x.bits();
    for (int k = 0; k < x.nmax(); ++k) {
        if (!x.pad_mask[k]) {
            continue;
        }
        const double* s = x.slot(k);
        Element e;
        e.cx = std::clamp(s[0], 0.0, 1.0);
        e.cy = std::clamp(s[1], 0.0, 1.0);
        e.w = std::clamp(s[2], 0.0, 1.0);
        e.h = std::clamp(s[3], 0.0, 1.0);
        e.category = decode_analog_bits(s + kGeometryDims, bits, categories.count());
        out.elements.push_back(e);
    }
    return out;
}

namespace {

// 0 wide, 1 tall, 2 unit cell, 3 larger square.
int shape_category(int wc, int hc, int category_count)
{
    int rule = 3;
    if (wc > hc) {
        rule = 0;
    } else if (hc > wc) {
        rule = 1;
    } else if (wc == 1) {
        rule = 2;
    }
    return rule % category_count;
}

} // namespace

Dataset generate_synthetic_dataset(const SyntheticConfig& cfg)
{
    if (cfg.grid < 2) {
        throw DomainError("synthetic grid must be at least 2");
    }
    if (cfg.nmax < 1 || cfg.categories < 1 || cfg.num_layouts < 1) {
        throw DomainError("synthetic dataset needs positive nmax, categories and size");
    }
    std::mt19937_64 rng(cfg.seed);
    const int g = cfg.grid;
    const int max_elements = std::min(cfg.nmax, g * g);
    std::uniform_int_distribution<int> count_dist(1, max_elements);
    // Spans cover at most half the grid per axis so several elements fit.
    std::uniform_int_distribution<int> span_dist(1, std::max(1, g / 2));

    Dataset ds;
    ds.categories = CategorySet::numbered(cfg.categories);
    ds.nmax = cfg.nmax;
    ds.layouts.reserve(cfg.num_layouts);

    for (int n = 0; n < cfg.num_layouts; ++n) {
        const int target = count_dist(rng);
        std::vector<char> occupied(static_cast<std::size_t>(g) * g, 0);
        Layout layout;
        int attempts = 0;
        while (static_cast<int>(layout.size()) < target && attempts < 200) {
            ++attempts;
            const int wc = span_dist(rng);
            const int hc = span_dist(rng);
            std::uniform_int_distribution<int> x_dist(0, g - wc);
            std::uniform_int_distribution<int> y_dist(0, g - hc);
            const int x0 = x_dist(rng);
            const int y0 = y_dist(rng);
            bool free = true;
            for (int y = y0; y < y0 + hc && free; ++y) {
                for (int x = x0; x < x0 + wc; ++x) {
                    if (occupied[static_cast<std::size_t>(y) * g + x]) {
                        free = false;
                        break;
                    }
                }
            }
            if (!free) {
                continue;
            }
            for (int y = y0; y < y0 + hc; ++y) {
                for (int x = x0; x < x0 + wc; ++x) {
                    occupied[static_cast<std::size_t>(y) * g + x] = 1;
                }
            }
            Element e;
            e.w = static_cast<double>(wc) / g;
            e.h = static_cast<double>(hc) / g;
            e.cx = (x0 + 0.5 * wc) / g;
            e.cy = (y0 + 0.5 * hc) / g;
            e.category = shape_category(wc, hc, cfg.categories);
            layout.elements.push_back(e);
        }
        ds.layouts.push_back(std::move(layout));
    }
    ds.rebuild_histogram();
    return ds;
}

namespace {

using nlohmann::json;

std::string record_context(std::size_t layout_index, std::size_t element_index)
{
    std::ostringstream os;
    os << "layout " << layout_index << ", element " << element_index;
    return os.str();
}

double require_number(const json& obj, const char* key, const std::string& context)
{
    if (!obj.contains(key) || !obj.at(key).is_number()) {
        throw FormatError(context + ": missing numeric field '" + key + "'");
    }
    return obj.at(key).get<double>();
}

} // namespace

LoadResult load_dataset(const std::filesystem::path& path, int nmax)
{
    std::ifstream in(path);
    if (!in) {
        throw FormatError("cannot open dataset file " + path.string());
    }
    json doc;
    try {
        doc = json::parse(in);
    } catch (const json::parse_error& e) {
        throw FormatError(path.string() + ": " + e.what());
    }
    if (!doc.is_object() || !doc.contains("canvas") || !doc.contains("categories") ||
        !doc.contains("layouts")) {
        throw FormatError(path.string() + ": expected object with canvas, categories and layouts");
    }
    const json& canvas = doc.at("canvas");
    const double width = require_number(canvas, "width", "canvas");
    const double height = require_number(canvas, "height", "canvas");
    if (width <= 0.0 || height <= 0.0) {
        throw FormatError("canvas dimensions must be positive");
    }
    if (!doc.at("categories").is_array() || doc.at("categories").empty()) {
        throw FormatError("categories must be a non-empty array of strings");
    }
    std::vector<std::string> names;
    for (const auto& n : doc.at("categories")) {
        if (!n.is_string()) {
            throw FormatError("category names must be strings");
        }
        names.push_back(n.get<std::string>());
    }

    if (nmax <= 0) {
        nmax = kDefaultNmax;
        if (doc.contains("nmax")) {
            if (!doc.at("nmax").is_number_integer() || doc.at("nmax").get<int>() < 1) {
                throw FormatError("nmax must be a positive integer");
            }
            nmax = doc.at("nmax").get<int>();
        }
    }

    LoadResult result;
    result.dataset.categories = CategorySet(std::move(names));
    result.dataset.nmax = nmax;
    const int category_count = result.dataset.categories.count();
    const json& layouts = doc.at("layouts");
    if (!layouts.is_array()) {
        throw FormatError("layouts must be an array");
    }
    for (std::size_t i = 0; i < layouts.size(); ++i) {
        const json& rec = layouts[i];
        if (!rec.is_array()) {
            throw FormatError("layout " + std::to_string(i) + ": expected an array of elements");
        }
        Layout layout;
        if (width > 1.0 && height > 1.0) {
            layout.canvas_width = static_cast<int>(width);
            layout.canvas_height = static_cast<int>(height);
        }
        for (std::size_t k = 0; k < rec.size(); ++k) {
            const auto ctx = record_context(i, k);
            const json& el = rec[k];
            if (!el.is_object()) {
                throw FormatError(ctx + ": expected an object");
            }
            if (!el.contains("category") || !el.at("category").is_number_integer()) {
                throw FormatError(ctx + ": missing integer field 'category'");
            }
            Element e;
            e.category = el.at("category").get<int>();
            if (e.category < 0 || e.category >= category_count) {
                throw FormatError(ctx + ": category " + std::to_string(e.category) + " out of range");
            }
            e.cx = require_number(el, "cx", ctx) / width;
            e.cy = require_number(el, "cy", ctx) / height;
            e.w = require_number(el, "w", ctx) / width;
            e.h = require_number(el, "h", ctx) / height;
            layout.elements.push_back(e);
        }
        if (layout.size() > static_cast<std::size_t>(nmax)) {
            ++result.skipped;
            continue;
        }
        result.dataset.layouts.push_back(std::move(layout));
    }
    if (result.dataset.layouts.empty()) {
        throw DomainError(path.string() + ": dataset contains no usable layouts");
    }
    result.dataset.rebuild_histogram();
    return result;
}

void save_dataset(const Dataset& dataset, const std::filesystem::path& path)
{
    json doc;
    doc["canvas"] = {{"width", 1}, {"height", 1}};
    doc["categories"] = dataset.categories.names();
    doc["nmax"] = dataset.nmax;
    json layouts = json::array();
    for (const auto& l : dataset.layouts) {
        json rec = json::array();
        for (const auto& e : l.elements) {
            rec.push_back({{"category", e.category}, {"cx", e.cx}, {"cy", e.cy}, {"w", e.w}, {"h", e.h}});
        }
        layouts.push_back(std::move(rec));
    }
    doc["layouts"] = std::move(layouts);
    std::ofstream out(path);
    if (!out) {
        throw FormatError("cannot write dataset file " + path.string());
    }
    out << doc.dump() << '\n';
}

std::pair<Dataset, Dataset> split_dataset(const Dataset& dataset, double holdout_fraction, std::uint64_t seed)
{
    if (holdout_fraction <= 0.0 || holdout_fraction >= 1.0) {
        throw DomainError("holdout fraction must lie in (0, 1)");
    }
    std::vector<std::size_t> order(dataset.size());
    std::iota(order.begin(), order.end(), 0);
    std::mt19937_64 rng(seed);
    std::shuffle(order.begin(), order.end(), rng);
    const auto held = static_cast<std::size_t>(std::round(holdout_fraction * dataset.size()));
    if (held == 0 || held >= dataset.size()) {
        throw DomainError("dataset too small to split");
    }
    Dataset train;
    Dataset test;
    for (Dataset* d : {&train, &test}) {
        d->categories = dataset.categories;
        d->nmax = dataset.nmax;
    }
    for (std::size_t i = 0; i < order.size(); ++i) {
        (i < order.size() - held ? train : test).layouts.push_back(dataset.layouts[order[i]]);
    }
    train.rebuild_histogram();
    test.rebuild_histogram();
    return {std::move(train), std::move(test)};
}

} // namespace layoutflow
