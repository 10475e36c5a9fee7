#include "tweezerlab/potential_map.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <ostream>
#include <stdexcept>
#include <string>

namespace tweezerlab {

void GridAxis::validate(const char* name) const
{
    if (count < 2 || !(max > min) || !std::isfinite(min) || !std::isfinite(max))
        throw std::invalid_argument(std::string(name) + " axis needs count >= 2 and max > min");
}

namespace {

// Per-node J0 factors for each rho and phase factors for each z.
struct FieldTables {
    std::vector<Complex> inc_by_rho;  // [i_rho][j] incident weight * J0
    std::vector<Complex> ref_by_rho;  // [i_rho][j] reflected weight * J0
    std::vector<Complex> phase_by_z;  // [i_z][j] exp(+i k c_j z)
    std::vector<double> bottom_radial;  // [i_rho]
    std::vector<Complex> bottom_axial;  // [i_z]
    std::size_t n_nodes = 0;
};

FieldTables build_tables(const TrapField& field, const GridAxis& rho, const GridAxis& z)
{
    FieldTables t;
    const auto nodes = field.beam().nodes();
    const auto wi = field.incident_weights();
    const auto wr = field.reflected_weights();
    const double k = field.beam().wavenumber();
    t.n_nodes = nodes.size();
    t.inc_by_rho.resize(rho.count * t.n_nodes);
    t.ref_by_rho.resize(rho.count * t.n_nodes);
    for (int i = 0; i < rho.count; ++i) {
        const double r = rho.at(i);
        for (std::size_t j = 0; j < t.n_nodes; ++j) {
            const double x = k * r * nodes[j].sin_theta;
            const double j0 = x == 0.0 ? 1.0 : std::cyl_bessel_j(0.0, x);
            t.inc_by_rho[i * t.n_nodes + j] = wi[j] * j0;
            t.ref_by_rho[i * t.n_nodes + j] = wr[j] * j0;
        }
    }
    t.phase_by_z.resize(z.count * t.n_nodes);
    for (int i = 0; i < z.count; ++i) {
        const double zz = z.at(i);
        for (std::size_t j = 0; j < t.n_nodes; ++j) {
            const double ph = k * nodes[j].cos_theta * zz;
            t.phase_by_z[i * t.n_nodes + j] = Complex(std::cos(ph), std::sin(ph));
        }
    }
    t.bottom_radial.assign(rho.count, 0.0);
    t.bottom_axial.assign(z.count, Complex{0, 0});
    if (field.has_bottom()) {
        const double w = field.bottom_waist();
        for (int i = 0; i < rho.count; ++i) {
            const double r = rho.at(i);
            t.bottom_radial[i] = std::exp(-r * r / (w * w));
        }
        for (int i = 0; i < z.count; ++i) {
            const double ph = field.bottom_wavenumber() * z.at(i);
            t.bottom_axial[i] = field.bottom_amplitude() * Complex(std::cos(ph), std::sin(ph));
        }
    }
    return t;
}

void fill_row(const FieldTables& t, const GridAxis& rho, int i_z, Complex* row)
{
    const Complex* e = &t.phase_by_z[i_z * t.n_nodes];
    for (int i = 0; i < rho.count; ++i) {
        const Complex* a = &t.inc_by_rho[i * t.n_nodes];
        const Complex* b = &t.ref_by_rho[i * t.n_nodes];
        Complex acc{0, 0};
        for (std::size_t j = 0; j < t.n_nodes; ++j)
            acc += a[j] * std::conj(e[j]) + b[j] * e[j];
        row[i] = acc + t.bottom_axial[i_z] * t.bottom_radial[i];
    }
}

void write_u32(std::ostream& os, std::uint32_t v)
{
    unsigned char b[4];
    for (int i = 0; i < 4; ++i)
        b[i] = static_cast<unsigned char>(v >> (8 * i));
    os.write(reinterpret_cast<const char*>(b), 4);
}

void write_u64(std::ostream& os, std::uint64_t v)
{
    unsigned char b[8];
    for (int i = 0; i < 8; ++i)
        b[i] = static_cast<unsigned char>(v >> (8 * i));
    os.write(reinterpret_cast<const char*>(b), 8);
}

void write_f64(std::ostream& os, double d) { write_u64(os, std::bit_cast<std::uint64_t>(d)); }

// Hermite basis on [0, 1]: value/derivative pairs.
struct Hermite {
    double h00, h10, h01, h11;
    double d00, d10, d01, d11;
};

Hermite hermite(double t)
{
    const double t2 = t * t, t3 = t2 * t;
    return {2 * t3 - 3 * t2 + 1, t3 - 2 * t2 + t, -2 * t3 + 3 * t2, t3 - t2,
            6 * t2 - 6 * t,      3 * t2 - 4 * t + 1, -6 * t2 + 6 * t, 3 * t2 - 2 * t};
}

}  // namespace

namespace kernels {

FieldGrid sample_field_serial(const TrapField& field, const GridAxis& rho, const GridAxis& z)
{
    rho.validate("rho");
    z.validate("z");
    FieldGrid grid{rho, z, std::vector<Complex>(static_cast<std::size_t>(rho.count) * z.count)};
    const FieldTables t = build_tables(field, rho, z);
    for (int iz = 0; iz < z.count; ++iz)
        fill_row(t, rho, iz, &grid.values[static_cast<std::size_t>(iz) * rho.count]);
    return grid;
}

FieldGrid sample_field_parallel(const TrapField& field, const GridAxis& rho, const GridAxis& z)
{
    rho.validate("rho");
    z.validate("z");
    FieldGrid grid{rho, z, std::vector<Complex>(static_cast<std::size_t>(rho.count) * z.count)};
    const FieldTables t = build_tables(field, rho, z);
    const int n_z = z.count;
#pragma omp parallel for schedule(static) num_threads(worker_count())
    for (int iz = 0; iz < n_z; ++iz)
        fill_row(t, rho, iz, &grid.values[static_cast<std::size_t>(iz) * rho.count]);
    return grid;
}

}  // namespace kernels

FieldGrid sample_field(const TrapField& field, const GridAxis& rho, const GridAxis& z, Execution execution)
{
    return execution == Execution::Serial ? kernels::sample_field_serial(field, rho, z)
                                          : kernels::sample_field_parallel(field, rho, z);
}

void write_intensity_dump(std::ostream& os, const FieldGrid& grid)
{
    os.write("TWZF", 4);
    write_u32(os, 1);
    write_u64(os, static_cast<std::uint64_t>(grid.rho.count));
    write_u64(os, static_cast<std::uint64_t>(grid.z.count));
    for (int i = 0; i < grid.rho.count; ++i)
        write_f64(os, grid.rho.at(i));
    for (int i = 0; i < grid.z.count; ++i)
        write_f64(os, grid.z.at(i));
    for (const Complex& v : grid.values)
        write_f64(os, std::norm(v));
}

PotentialMap::PotentialMap(GridAxis rho, GridAxis z, std::vector<double> dipole,
                           PhysicalConstants constants, std::optional<SurfaceMaterial> surface)
    : rho_(rho), z_(z), constants_(constants), surface_(std::move(surface))
{
    rho_.validate("rho");
    z_.validate("z");
    if (rho_.min != 0.0)
        throw std::invalid_argument("PotentialMap: rho axis must start at 0");
    const int nr = rho_.count, nz = z_.count;
    if (dipole.size() != static_cast<std::size_t>(nr) * nz)
        throw std::invalid_argument("PotentialMap: value count does not match the grid");

    auto f = [&](int ir, int iz) {
        if (ir < 0)
            ir = -ir;  // U(-rho) = U(rho)
        return dipole[static_cast<std::size_t>(iz) * nr + ir];
    };
    auto d_rho = [&](int ir, int iz) {
        if (ir == 0)
            return 0.0;
        if (ir == nr - 1)
            return f(ir, iz) - f(ir - 1, iz);
        return 0.5 * (f(ir + 1, iz) - f(ir - 1, iz));
    };
    nodes_.resize(dipole.size());
    for (int iz = 0; iz < nz; ++iz) {
        for (int ir = 0; ir < nr; ++ir) {
            double dz, drz;
            if (iz == 0) {
                dz = f(ir, 1) - f(ir, 0);
                drz = d_rho(ir, 1) - d_rho(ir, 0);
            }
            else if (iz == nz - 1) {
                dz = f(ir, iz) - f(ir, iz - 1);
                drz = d_rho(ir, iz) - d_rho(ir, iz - 1);
            }
            else {
                dz = 0.5 * (f(ir, iz + 1) - f(ir, iz - 1));
                drz = 0.5 * (d_rho(ir, iz + 1) - d_rho(ir, iz - 1));
            }
            nodes_[index(ir, iz)] = {f(ir, iz), d_rho(ir, iz), dz, drz};
        }
    }
}

PotentialMap::Sample PotentialMap::sample_dipole(double rho, double z) const
{
    const double hr = rho_.step(), hz = z_.step();
    double sr = (rho - rho_.min) / hr;
    double sz = (z - z_.min) / hz;
    sr = std::clamp(sr, 0.0, static_cast<double>(rho_.count - 1));
    sz = std::clamp(sz, 0.0, static_cast<double>(z_.count - 1));
    int ir = std::min(static_cast<int>(sr), rho_.count - 2);
    int iz = std::min(static_cast<int>(sz), z_.count - 2);
    const Hermite a = hermite(sr - ir);
    const Hermite b = hermite(sz - iz);

    const auto& n00 = nodes_[index(ir, iz)];
    const auto& n10 = nodes_[index(ir + 1, iz)];
    const auto& n01 = nodes_[index(ir, iz + 1)];
    const auto& n11 = nodes_[index(ir + 1, iz + 1)];

    // Tensor-product Hermite: sum over corners of f, f_r, f_z, f_rz terms.
    auto combine = [&](double ar0, double ar1, double br0, double br1, double at0, double at1,
                       double bt0, double bt1) {
        // ar*: rho value basis for corner 0/1, at*: rho slope basis; b* likewise in z.
        return n00[0] * ar0 * br0 + n00[1] * at0 * br0 + n00[2] * ar0 * bt0 + n00[3] * at0 * bt0 +
               n10[0] * ar1 * br0 + n10[1] * at1 * br0 + n10[2] * ar1 * bt0 + n10[3] * at1 * bt0 +
               n01[0] * ar0 * br1 + n01[1] * at0 * br1 + n01[2] * ar0 * bt1 + n01[3] * at0 * bt1 +
               n11[0] * ar1 * br1 + n11[1] * at1 * br1 + n11[2] * ar1 * bt1 + n11[3] * at1 * bt1;
    };
    Sample s;
    s.value = combine(a.h00, a.h01, b.h00, b.h01, a.h10, a.h11, b.h10, b.h11);
    s.d_rho = combine(a.d00, a.d01, b.h00, b.h01, a.d10, a.d11, b.h10, b.h11) / hr;
    s.d_z = combine(a.h00, a.h01, b.d00, b.d01, a.h10, a.h11, b.d10, b.d11) / hz;
    return s;
}

PotentialMap::Sample PotentialMap::sample(double rho, double z) const
{
    Sample s = sample_dipole(rho, z);
    if (surface_) {
        s.value += casimir_polder(z, *surface_, constants_);
        s.d_z += casimir_polder_gradient(z, *surface_, constants_);
    }
    return s;
}

double PotentialMap::value(const std::array<double, 3>& r) const
{
    return sample(std::hypot(r[0], r[1]), r[2]).value;
}

std::array<double, 3> PotentialMap::gradient(const std::array<double, 3>& r) const
{
    const double rho = std::hypot(r[0], r[1]);
    const Sample s = sample(rho, r[2]);
    if (rho == 0.0)
        return {0.0, 0.0, s.d_z};
    return {s.d_rho * r[0] / rho, s.d_rho * r[1] / rho, s.d_z};
}

PotentialFunction PotentialMap::function() const
{
    return [this](double rho, double z) { return value(rho, z); };
}

PotentialMap dipole_potential(const FieldGrid& field, const PhysicalConstants& constants)
{
    std::vector<double> u(field.values.size());
    for (std::size_t i = 0; i < u.size(); ++i)
        u[i] = dipole_potential(std::norm(field.values[i]), constants);
    return PotentialMap(field.rho, field.z, std::move(u), constants, std::nullopt);
}

PotentialMap total_potential(const TrapField& field, const PhysicalConstants& constants,
                             const SurfaceMaterial& material, const GridAxis& rho,
                             const GridAxis& z, Execution execution)
{
    const FieldGrid grid = sample_field(field, rho, z, execution);
    std::vector<double> u(grid.values.size());
    for (std::size_t i = 0; i < u.size(); ++i)
        u[i] = dipole_potential(std::norm(grid.values[i]), constants);
    return PotentialMap(rho, z, std::move(u), constants, material);
}

}  // namespace tweezerlab
