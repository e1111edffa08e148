#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace layoutflow {

/// Number of geometry coordinates per element: (cx, cy, w, h).
inline constexpr int kGeometryDims = 4;

struct Element {
    double cx = 0.0;
    double cy = 0.0;
    double w = 0.0;
    double h = 0.0;
    int category = 0;

    friend bool operator==(const Element&, const Element&) = default;
};

struct Layout {
    std::vector<Element> elements;
    // Pixel canvas, used only when rendering.
    int canvas_width = 360;
    int canvas_height = 640;

    std::size_t size() const noexcept { return elements.size(); }
    friend bool operator==(const Layout& a, const Layout& b) { return a.elements == b.elements; }
};

class CategorySet {
public:
    CategorySet() = default;
    explicit CategorySet(std::vector<std::string> names);

    /// Generic names "c0".."c{n-1}".
    static CategorySet numbered(int count);

    int count() const noexcept { return static_cast<int>(m_names.size()); }
    int bits() const noexcept { return m_bits; }
    const std::vector<std::string>& names() const noexcept { return m_names; }

    friend bool operator==(const CategorySet&, const CategorySet&) = default;

private:
    std::vector<std::string> m_names;
    int m_bits = 1;
};

/// ceil(log2(count)), at least 1.
int bits_for_categories(int count);

/// Flattened flow-space state, element-major: [g^1, bits^1, g^2, bits^2, ...].
struct FlowVector {
    std::vector<double> data;
    std::vector<bool> pad_mask; // true = real element

    FlowVector() = default;
    FlowVector(int nmax, int bits);

    int nmax() const noexcept { return static_cast<int>(pad_mask.size()); }
    int stride() const noexcept { return nmax() == 0 ? 0 : static_cast<int>(data.size()) / nmax(); }
    int bits() const noexcept { return stride() - kGeometryDims; }
    int real_count() const noexcept;

    double* slot(int k) noexcept { return data.data() + static_cast<std::size_t>(k) * stride(); }
    const double* slot(int k) const noexcept { return data.data() + static_cast<std::size_t>(k) * stride(); }

    /// Zeroes all padded slots.
    void apply_padding() noexcept;

    friend bool operator==(const FlowVector&, const FlowVector&) = default;
};

struct Dataset {
    std::vector<Layout> layouts;
    CategorySet categories;
    // element_histogram[n] = number of layouts with n elements, n in [0, nmax]
    std::vector<std::int64_t> element_histogram;
    int nmax = 0;

    std::size_t size() const noexcept { return layouts.size(); }
    void rebuild_histogram();
};

std::vector<double> encode_analog_bits(int category, int bits);
int decode_analog_bits(const double* values, int bits, int category_count);
int decode_analog_bits(const std::vector<double>& values, int category_count);

FlowVector layout_to_vector(const Layout& layout, const CategorySet& categories, int nmax);
Layout vector_to_layout(const FlowVector& x, const CategorySet& categories);

struct SyntheticConfig {
    int num_layouts = 500;
    int categories = 4;
    int nmax = 8;
    int grid = 4;
    std::uint64_t seed = 7;
};

/// Grid-lattice layouts: elements are disjoint cell spans, so overlap is zero
/// and edges sit on multiples of 1/grid. Category follows span shape
/// (wide, tall, unit cell, larger square) modulo the category count.
Dataset generate_synthetic_dataset(const SyntheticConfig& cfg);

struct LoadResult {
    Dataset dataset;
    int skipped = 0; // layouts with more than nmax elements
};

inline constexpr int kDefaultNmax = 20;

/// Reads the JSON dataset schema; pixel coordinates are divided by the canvas
/// size. nmax <= 0 takes the file's optional "nmax" key, else kDefaultNmax.
/// Layouts with more than nmax elements are skipped and counted.
LoadResult load_dataset(const std::filesystem::path& path, int nmax = 0);
void save_dataset(const Dataset& dataset, const std::filesystem::path& path);

/// Splits off the last `fraction` of layouts (after a seeded shuffle) as a held-out set.
std::pair<Dataset, Dataset> split_dataset(const Dataset& dataset, double holdout_fraction, std::uint64_t seed);

} // namespace layoutflow
