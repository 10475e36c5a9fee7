#include <algorithm>
#include <cmath>
#include <functional>
#include <iostream>
#include <limits>
#include <numeric>
#include <sstream>

#include <CLI11.hpp>

#include "tweezerlab/assembly_sim.hpp"
#include "tweezerlab/beam_field.hpp"
#include "tweezerlab/cli.hpp"
#include "tweezerlab/conveyor.hpp"
#include "tweezerlab/errors.hpp"
#include "tweezerlab/imaging_model.hpp"
#include "tweezerlab/layered_optics.hpp"
#include "tweezerlab/loading_mc.hpp"
#include "tweezerlab/potential_map.hpp"
#include "tweezerlab/stats_fit.hpp"
#include "tweezerlab/trap_potential.hpp"

#ifndef TWEEZERLAB_VERSION
#define TWEEZERLAB_VERSION "dev"
#endif

namespace tweezerlab::cli {

namespace {

constexpr double um = 1e-6;
constexpr double nm = 1e-9;
constexpr double ms = 1e-3;
constexpr double us = 1e-6;
constexpr double mW = 1e-3;
constexpr double deg = std::numbers::pi / 180;

using Executor = std::function<int(OutputDir&, RunManifest&)>;

struct Command {
    std::string name;
    std::string summary;
    std::function<Executor(ConfigReader&, RunManifest&)> prepare;
};

Json number_or_null(double v) { return std::isfinite(v) ? Json(v) : Json(nullptr); }

Json nlls_diagnostics(const NllsResult& fit)
{
    Json j;
    j["status"] = to_string(fit.status);
    j["message"] = fit.message;
    j["iterations"] = fit.iterations;
    j["evaluations"] = fit.evaluations;
    j["cost"] = fit.cost;
    j["residual_norm"] = fit.residual_norm();
    j["condition_number"] = number_or_null(fit.condition_number);
    j["ill_conditioned"] = fit.ill_conditioned;
    return j;
}

std::filesystem::path input_file(ConfigReader& r, const std::string& key, RunManifest& manifest)
{
    const std::filesystem::path p = r.string(key);
    if (!std::filesystem::is_regular_file(p))
        throw ConfigError("key '" + r.qualified(key) + "': file '" + p.string() + "' not found");
    manifest.input_hashes[p.string()] = sha256_file(p);
    return p;
}

// ---- shared config blocks -------------------------------------------------

void require_config(bool ok, const ConfigReader& r, const std::string& key, const std::string& what)
{
    if (!ok)
        throw ConfigError("key '" + r.qualified(key) + "' " + what);
}

LayerStack read_stack(ConfigReader& r)
{
    const std::string preset = r.string("preset", "membrane");
    if (preset == "custom") {
        std::vector<Layer> layers;
        for (ConfigReader* l : r.objects("layers")) {
            Layer layer;
            layer.index = Complex(l->number("n"), l->number("k", 0.0));
            const double t = l->number("thickness_nm", std::numeric_limits<double>::infinity());
            layer.thickness = std::isinf(t) ? Layer::kSemiInfinite : t * nm;
            layers.push_back(layer);
        }
        try {
            return LayerStack(std::move(layers));
        }
        catch (const std::invalid_argument& e) {
            throw ConfigError("key '" + r.qualified("layers") + "': " + e.what());
        }
    }
    MaterialIndices idx;
    idx.silica = r.number("silica_index", idx.silica);
    idx.silicon_nitride = r.number("silicon_nitride_index", idx.silicon_nitride);
    if (preset == "membrane")
        return membrane_stack(idx, false);
    if (preset == "membrane_with_top_layer")
        return membrane_stack(idx, true);
    throw ConfigError("key '" + r.qualified("preset") + "' must be membrane, membrane_with_top_layer or custom, got '" +
                      preset + "'");
}

void read_beam(ConfigReader& r, BeamSpec& beam)
{
    beam.wavelength = r.number("wavelength_nm", beam.wavelength / nm) * nm;
    beam.power = r.number("power_mW", beam.power / mW) * mW;
    beam.waist = r.number("waist_um", beam.waist / um) * um;
    beam.numerical_aperture = r.number("numerical_aperture", beam.numerical_aperture);
    try {
        beam.validate();
    }
    catch (const std::invalid_argument& e) {
        throw ConfigError("'" + r.qualified("") + "': " + e.what());
    }
}

TrapConfiguration read_trap(ConfigReader& r)
{
    ConfigReader& bottom = r.object("bottom_beam");
    const bool with_bottom = bottom.boolean("enabled", false);
    TrapConfiguration cfg = membrane_configuration(with_bottom, r.number("relative_phase_cycles", 0.0));
    read_beam(r.object("top_beam"), cfg.top_beam);
    BeamSpec b = cfg.bottom_beam.value_or(membrane_configuration(true).bottom_beam.value());
    read_beam(bottom, b);
    if (with_bottom)
        cfg.bottom_beam = b;
    cfg.stack = read_stack(r.object("stack"));
    cfg.focus_offset = r.number("focus_offset_um", 0.0) * um;
    const std::string surface = r.string("surface", "membrane");
    const double rw = r.number("waveguide_reflectance", 0.03);
    if (surface == "waveguide")
        cfg = waveguide_surrogate(cfg, rw);
    else if (surface != "membrane")
        throw ConfigError("key '" + r.qualified("surface") + "' must be membrane or waveguide, got '" + surface + "'");
    return cfg;
}

struct Physics {
    PhysicalConstants constants;
    SurfaceMaterial material;
    std::optional<CalibrationResult> calibration;
};

struct PhysicsSpec {
    SurfaceMaterial material;
    std::optional<double> polarizability;
    double calibration_depth = 3e-3;  // K
};

PhysicsSpec read_physics(ConfigReader& r)
{
    PhysicsSpec p;
    const std::string name = r.string("material", "SiO2");
    try {
        p.material = SurfaceMaterial::by_name(name);
    }
    catch (const std::invalid_argument& e) {
        throw ConfigError("key '" + r.qualified("material") + "': " + e.what());
    }
    p.calibration_depth = r.number("calibration_depth_mK", 3.0) * 1e-3;
    require_config(p.calibration_depth > 0, r, "calibration_depth_mK", "must be > 0");
    if (!r.is_null("polarizability_Cm2_per_V")) {
        p.polarizability = r.number("polarizability_Cm2_per_V");
        require_config(*p.polarizability > 0, r, "polarizability_Cm2_per_V", "must be > 0");
    }
    else {
        r.number("polarizability_Cm2_per_V", std::numeric_limits<double>::quiet_NaN());
    }
    return p;
}

// Polarizability given directly or calibrated on the stationary membrane trap
// built from the same stack and tweezer beam.
Physics resolve_physics(const PhysicsSpec& spec, const TrapConfiguration& trap)
{
    Physics p;
    p.material = spec.material;
    if (spec.polarizability) {
        p.constants.polarizability = *spec.polarizability;
        return p;
    }
    TrapConfiguration reference = membrane_configuration(false);
    reference.top_beam = trap.top_beam;
    reference.stack = trap.stack;
    p.calibration = calibrate_polarizability(reference, p.constants, p.material, spec.calibration_depth);
    p.constants.polarizability = p.calibration->polarizability;
    return p;
}

Json physics_json(const Physics& p)
{
    Json j;
    j["material"] = p.material.name;
    j["polarizability_Cm2_per_V"] = p.constants.polarizability;
    j["calibrated"] = p.calibration.has_value();
    if (p.calibration) {
        j["calibration_depth_mK"] = p.constants.joules_to_millikelvin(p.calibration->deepest_depth);
        j["calibration_site_index"] = p.calibration->deepest_index;
    }
    return j;
}

GridAxis read_axis(ConfigReader& r, const std::string& prefix, double lo_um, double hi_um, long long n)
{
    GridAxis a;
    a.min = r.number(prefix + "_min_um", lo_um) * um;
    a.max = r.number(prefix + "_max_um", hi_um) * um;
    a.count = static_cast<int>(r.integer("n_" + prefix, n));
    try {
        a.validate(prefix.c_str());
    }
    catch (const std::invalid_argument& e) {
        throw ConfigError("'" + r.qualified(prefix) + "' axis: " + e.what());
    }
    return a;
}


Json site_json(const TrapSite& s, const PhysicalConstants& c)
{
    Json j;
    j["index"] = s.index;
    j["z_um"] = s.z / um;
    j["depth_mK"] = c.joules_to_millikelvin(s.depth);
    j["potential_mK"] = c.joules_to_millikelvin(s.potential);
    j["f_a_Hz"] = s.axial_frequency;
    j["f_r_Hz"] = s.radial_frequency ? Json(*s.radial_frequency) : Json(nullptr);
    j["eta_a2"] = s.eta_axial_sq;
    j["eta_r2"] = s.eta_radial_sq ? Json(*s.eta_radial_sq) : Json(nullptr);
    return j;
}

// ---- stack ----------------------------------------------------------------

Executor prepare_stack(ConfigReader& r, RunManifest&)
{
    LayerStack stack = read_stack(r.object("stack"));
    const double wavelength = r.number("wavelength_nm", 935.0) * nm;
    const std::string pol = r.string("polarization", "both");
    ConfigReader& angles = r.object("angles");
    std::vector<double> thetas;
    if (angles.has("values_deg")) {
        for (double t : angles.numbers("values_deg"))
            thetas.push_back(t * deg);
    }
    else {
        const double lo = angles.number("min_deg", 0.0), hi = angles.number("max_deg", 89.0);
        const auto n = angles.integer("count", 90);
        require_config(n >= 1, angles, "count", "must be >= 1");
        require_config(n == 1 || hi > lo, angles, "max_deg", "must exceed min_deg");
        for (long long i = 0; i < n; ++i)
            thetas.push_back((n == 1 ? lo : lo + (hi - lo) * static_cast<double>(i) / (n - 1)) * deg);
    }
    require_config(pol == "both" || pol == "s" || pol == "p", r, "polarization", "must be both, s or p");
    require_config(wavelength > 0, r, "wavelength_nm", "must be > 0");
    return [=](OutputDir& out, RunManifest&) {
        const bool s = pol != "p", p = pol != "s";
        std::vector<std::string> header{"theta_deg"};
        if (s && p)
            header = {"theta_deg", "R_s", "R_p", "T_s", "T_p", "phase_r_s", "phase_r_p"};
        else if (s)
            header = {"theta_deg", "R_s", "T_s", "phase_r_s"};
        else
            header = {"theta_deg", "R_p", "T_p", "phase_r_p"};
        CsvWriter csv(header);
        const auto rs = s ? reflectance_spectrum(stack, wavelength, thetas, Polarization::S)
                          : std::vector<PlaneWaveResponse>{};
        const auto rp = p ? reflectance_spectrum(stack, wavelength, thetas, Polarization::P)
                          : std::vector<PlaneWaveResponse>{};
        for (std::size_t i = 0; i < thetas.size(); ++i) {
            const double t = thetas[i] / deg;
            if (s && p)
                csv.row({t, rs[i].R, rp[i].R, rs[i].T, rp[i].T, std::arg(rs[i].r), std::arg(rp[i].r)});
            else if (s)
                csv.row({t, rs[i].R, rs[i].T, std::arg(rs[i].r)});
            else
                csv.row({t, rp[i].R, rp[i].T, std::arg(rp[i].r)});
        }
        out.write_text("reflectance.csv", csv.str());
        return kExitOk;
    };
}

// ---- field ----------------------------------------------------------------

Executor prepare_field(ConfigReader& r, RunManifest&)
{
    const TrapConfiguration trap = read_trap(r.object("trap"));
    ConfigReader& axial = r.object("axial");
    const GridAxis z_axis = read_axis(axial, "z", 0.0, 20.0, 2001);
    ConfigReader& radial = r.object("radial");
    const double radial_z = radial.number("z_um", std::numeric_limits<double>::quiet_NaN()) * um;
    const GridAxis rho_axis = read_axis(radial, "rho", 0.0, 5.0, 201);
    ConfigReader& grid = r.object("grid");
    const bool dump = grid.boolean("enabled", false);
    const GridAxis grid_rho = read_axis(grid, "rho", 0.0, 5.0, 101);
    const GridAxis grid_z = read_axis(grid, "z", 0.0, 20.0, 801);
    return [=](OutputDir& out, RunManifest&) {
        const TrapField field(trap);
        const LineCut cut = axial_line_cut(field, z_axis.min, z_axis.max, z_axis.count);
        CsvWriter a({"z_um", "intensity_W_per_m2"});
        for (std::size_t i = 0; i < cut.z.size(); ++i)
            a.row({cut.z[i] / um, cut.value[i]});
        out.write_text("axial_cut.csv", a.str());

        const double zr = std::isnan(radial_z) ? field.first_stationary_maximum() : radial_z;
        CsvWriter rc({"rho_um", "intensity_W_per_m2"});
        for (int i = 0; i < rho_axis.count; ++i)
            rc.row({rho_axis.at(i) / um, field.intensity(rho_axis.at(i), zr)});
        out.write_text("radial_cut.csv", rc.str());

        Json summary;
        summary["first_stationary_maximum_um"] = field.first_stationary_maximum() / um;
        summary["radial_cut_z_um"] = zr / um;
        summary["focal_radius_um"] = focal_radius(field.beam()) / um;
        summary["quadrature_order"] = field.beam().quadrature_order();
        summary["pupil_width"] = field.beam().pupil_width();
        if (dump) {
            const FieldGrid g = sample_field(field, grid_rho, grid_z);
            std::ostringstream bin(std::ios::binary);
            write_intensity_dump(bin, g);
            out.write_binary("intensity_grid.bin", bin.str());
        }
        out.write_json("field_summary.json", summary);
        return kExitOk;
    };
}

// ---- potential ------------------------------------------------------------

Executor prepare_potential(ConfigReader& r, RunManifest&)
{
    const TrapConfiguration trap = read_trap(r.object("trap"));
    const PhysicsSpec phys = read_physics(r.object("physics"));
    ConfigReader& axial = r.object("axial");
    const GridAxis z_axis = read_axis(axial, "z", 0.02, 20.0, 4001);
    ConfigReader& radial = r.object("radial");
    const GridAxis rho_axis = read_axis(radial, "rho", 0.0, 3.0, 151);
    require_config(z_axis.min > 0, axial, "z_min_um", "must be > 0 (Casimir-Polder diverges at the surface)");
    return [=](OutputDir& out, RunManifest&) {
        const Physics p = resolve_physics(phys, trap);
        const TrapField field(trap);
        const TrapPotential U(field, p.constants, p.material);
        const AxialProfile profile = axial_potential(U, z_axis.min, z_axis.max, z_axis.count);
        CsvWriter a({"z_um", "U_mK"});
        for (std::size_t i = 0; i < profile.z.size(); ++i)
            a.row({profile.z[i] / um, p.constants.joules_to_millikelvin(profile.potential[i])});
        out.write_text("axial_potential.csv", a.str());

        const auto sites = characterize_sites(U, z_axis.min, z_axis.max);
        Json table = Json::array();
        for (const auto& s : sites)
            table.push_back(site_json(s, p.constants));
        Json doc;
        doc["physics"] = physics_json(p);
        doc["sites"] = table;
        if (!sites.empty()) {
            const auto deepest = std::max_element(sites.begin(), sites.end(),
                                                  [](const TrapSite& x, const TrapSite& y) { return x.depth < y.depth; });
            doc["deepest_site"] = deepest->index;
            CsvWriter rc({"rho_um", "U_mK"});
            for (int i = 0; i < rho_axis.count; ++i)
                rc.row({rho_axis.at(i) / um, p.constants.joules_to_millikelvin(U(rho_axis.at(i), deepest->z))});
            out.write_text("radial_potential.csv", rc.str());
        }
        out.write_json("sites.json", doc);
        return kExitOk;
    };
}

// ---- conveyor -------------------------------------------------------------

Executor prepare_conveyor(ConfigReader& r, RunManifest&)
{
    const double wavelength = r.number("trap_wavelength_nm", 935.0) * nm;
    const auto n = r.integer("n_samples", 201);
    ConfigReader& prof = r.object("profile");
    std::optional<DetuningProfile> profile;
    try {
        if (prof.has("breakpoints")) {
            std::vector<DetuningProfile::Breakpoint> pts;
            for (ConfigReader* b : prof.objects("breakpoints"))
                pts.push_back({b->number("t_ms") * ms, b->number("detuning_Hz")});
            profile.emplace(std::move(pts));
        }
        else {
            profile = DetuningProfile::trapezoid(prof.number("hold_detuning_Hz", -1000.0),
                                                 prof.number("hold_ms", 3.0) * ms, prof.number("ramp_ms", 1.0) * ms);
        }
    }
    catch (const std::invalid_argument& e) {
        throw ConfigError("'" + prof.qualified("") + "': " + e.what());
    }
    require_config(n >= 2, r, "n_samples", "must be >= 2");
    require_config(wavelength > 0, r, "trap_wavelength_nm", "must be > 0");
    return [=](OutputDir& out, RunManifest&) {
        const TransportSamples s = transport_kinematics(*profile, wavelength, static_cast<int>(n));
        CsvWriter csv({"t_ms", "dnu_Hz", "dz_um"});
        for (std::size_t i = 0; i < s.t.size(); ++i)
            csv.row({s.t[i] / ms, s.detuning[i], s.displacement[i] / um});
        out.write_text("conveyor.csv", csv.str());
        Json j;
        j["final_displacement_um"] = s.final_displacement / um;
        j["duration_ms"] = (profile->end() - profile->start()) / ms;
        out.write_json("conveyor_summary.json", j);
        return kExitOk;
    };
}

// ---- mc-load --------------------------------------------------------------

Executor prepare_mc_load(ConfigReader& r, RunManifest& manifest)
{
    const TrapConfiguration trap = read_trap(r.object("trap"));
    const PhysicsSpec phys = read_physics(r.object("physics"));
    ConfigReader& m = r.object("mc");
    MCConfig mc;
    mc.box_width = m.number("box_width_um", mc.box_width / um) * um;
    mc.box_height = m.number("box_height_um", mc.box_height / um) * um;
    mc.n_trajectories = static_cast<int>(m.integer("n_trajectories", mc.n_trajectories));
    mc.temperature = m.number("temperature_uK", mc.temperature / 1e-6) * 1e-6;
    mc.duration = m.number("duration_ms", mc.duration / ms) * ms;
    mc.dt = m.number("dt_us", mc.dt / us) * us;
    mc.cooling.damping_coefficient = m.number("damping_per_s", 2e3) * PhysicalConstants{}.mass;
    mc.cooling.scattering_rate = m.number("scattering_rate_Hz", mc.cooling.scattering_rate);
    mc.blowup_factor = m.number("blowup_factor", mc.blowup_factor);
    const long long seed = r.integer("seed", 1);
    require_config(seed >= 0, r, "seed", "must be >= 0");
    mc.seed = static_cast<std::uint64_t>(seed);
    manifest.seed = mc.seed;
    try {
        mc.validate();
    }
    catch (const std::invalid_argument& e) {
        throw ConfigError("'mc': " + std::string(e.what()));
    }
    ConfigReader& grid = r.object("grid");
    const GridAxis rho = read_axis(grid, "rho", 0.0, 7.5, 301);
    const GridAxis z = read_axis(grid, "z", 0.0, 20.0, 2001);
    const bool dump = r.boolean("dump_trajectories", false);
    return [=](OutputDir& out, RunManifest&) {
        const Physics p = resolve_physics(phys, trap);
        const TrapField field(trap);
        const PotentialMap map = total_potential(field, p.constants, p.material, rho, z);
        const TrapPotential U(field, p.constants, p.material);
        const auto sites = characterize_sites(U, std::max(z.min, 20e-9), z.max - 0.1 * um);
        const LoadingReport rep = run_loading(mc, map, sites);

        Json j;
        j["n_trajectories"] = rep.n_trajectories;
        j["bound"] = rep.bound;
        j["escaped"] = rep.escaped;
        j["adsorbed"] = rep.adsorbed;
        j["flagged"] = rep.flagged;
        j["p_tot"] = rep.p_tot();
        j["first_site_share"] = rep.first_site_share();
        j["dt_used_us"] = rep.dt_used / us;
        j["seed"] = rep.seed;
        j["physics"] = physics_json(p);
        Json table = Json::array();
        CsvWriter hist({"site", "z_um", "count", "fraction_of_bound"});
        for (std::size_t i = 0; i < sites.size(); ++i) {
            Json s = site_json(sites[i], p.constants);
            s["count"] = rep.site_counts[i];
            table.push_back(s);
            hist.row({static_cast<double>(sites[i].index), sites[i].z / um, static_cast<double>(rep.site_counts[i]),
                      rep.bound > 0 ? static_cast<double>(rep.site_counts[i]) / rep.bound : 0.0});
        }
        j["sites"] = table;
        out.write_json("loading_report.json", j);
        out.write_text("site_histogram.csv", hist.str());
        if (dump) {
            CsvWriter t({"index", "outcome", "final_z_um"});
            for (std::size_t i = 0; i < rep.trajectories.size(); ++i) {
                const auto& tr = rep.trajectories[i];
                t.row(std::vector<std::string>{std::to_string(i), to_string(tr.outcome), format_number(tr.final_z / um)});
            }
            out.write_text("trajectories.csv", t.str());
        }
        return kExitOk;
    };
}

// ---- imaging --------------------------------------------------------------

Executor prepare_imaging(ConfigReader& r, RunManifest&)
{
    ConfigReader& c = r.object("camera");
    CameraModel cam;
    cam.electrons_per_count = c.number("electrons_per_count", cam.electrons_per_count);
    cam.em_gain = c.number("em_gain", cam.em_gain);
    cam.quantum_efficiency = c.number("quantum_efficiency", cam.quantum_efficiency);
    cam.optics_transmittance = c.number("optics_transmittance", cam.optics_transmittance);
    cam.collection_fraction = c.number("collection_fraction", cam.collection_fraction);
    cam.pixel_pitch = c.number("pixel_pitch_nm", cam.pixel_pitch / nm) * nm;
    cam.exposure = c.number("exposure_ms", cam.exposure / ms) * ms;
    cam.counting_pixels = static_cast<int>(c.integer("counting_pixels", cam.counting_pixels));
    try {
        cam.validate();
    }
    catch (const std::invalid_argument& e) {
        throw ConfigError("'camera': " + std::string(e.what()));
    }
    const double na = r.number("numerical_aperture", 0.35);
    const double wavelength = r.number("wavelength_nm", 852.0) * nm;
    const double reflectance = r.number("reflectance", 0.3);
    const double counts = r.number("reference_counts", 1000.0);
    const double heating_photons = r.number("heating_photons", 45000.0);
    ConfigReader& d = r.object("defocus");
    const GridAxis z = read_axis(d, "z", 0.0, 10.0, 51);
    require_config(z.min >= 0, d, "z_min_um", "must be >= 0");
    require_config(reflectance >= 0 && reflectance <= 1, r, "reflectance", "must lie in [0, 1]");
    require_config(counts >= 0, r, "reference_counts", "must be >= 0");
    require_config(heating_photons >= 0, r, "heating_photons", "must be >= 0");
    require_config(na > 0 && na <= 1, r, "numerical_aperture", "must lie in (0, 1]");
    require_config(wavelength > 0, r, "wavelength_nm", "must be > 0");
    return [=](OutputDir& out, RunManifest&) {
        const PhysicalConstants pc;
        const double photons = photons_from_counts(counts, cam);
        Json j;
        j["counts_per_photon"] = cam.counts_per_photon();
        j["reference_counts"] = counts;
        j["photons_for_reference_counts"] = photons;
        j["heating_photons"] = heating_photons;
        j["recoil_heating_mK"] = recoil_heating(heating_photons, pc) * 1e3;
        const DefocusPsf psf(na, wavelength);
        CsvWriter csv({"z_um", "counts", "total_counts", "capture_fraction"});
        for (int i = 0; i < z.count; ++i) {
            const auto dc = defocused_counts(z.at(i), cam, reflectance, photons, psf);
            csv.row({z.at(i) / um, dc.counts, dc.total_counts, dc.capture_fraction});
        }
        out.write_text("defocus_counts.csv", csv.str());
        out.write_json("imaging_summary.json", j);
        return kExitOk;
    };
}

// ---- synth-hist -----------------------------------------------------------

Executor prepare_synth(ConfigReader& r, RunManifest& manifest)
{
    SynthSpec spec;
    spec.background = r.number("background", spec.background);
    spec.background_width = r.number("background_width", spec.background_width);
    spec.atom_counts = r.number("atom_counts", spec.atom_counts);
    spec.atom_width = r.number("atom_width", spec.atom_width);
    spec.n_shots = static_cast<int>(r.integer("n_shots", spec.n_shots));
    spec.bin_width = r.number("bin_width", spec.bin_width);
    const long long seed = r.integer("seed", 1);
    require_config(seed >= 0, r, "seed", "must be >= 0");
    spec.seed = static_cast<std::uint64_t>(seed);
    manifest.seed = spec.seed;
    ConfigReader& occ = r.object("occupancy");
    if (occ.has("probabilities")) {
        spec.occupancy = OccupancyLaw::explicit_law(occ.numbers("probabilities"));
        for (double p : spec.occupancy.probabilities)
            require_config(p >= 0, occ, "probabilities", "entries must be >= 0");
    }
    else {
        spec.occupancy = OccupancyLaw::poisson(occ.number("poisson_mean", 1.0),
                                               static_cast<int>(occ.integer("max_atoms", 3)));
        require_config(spec.occupancy.poisson_mean >= 0, occ, "poisson_mean", "must be >= 0");
    }
    require_config(spec.n_shots > 0, r, "n_shots", "must be > 0");
    require_config(spec.bin_width > 0, r, "bin_width", "must be > 0");
    return [=](OutputDir& out, RunManifest&) {
        SynthResult res;
        try {
            res = synth_histogram(spec);
        }
        catch (const std::invalid_argument& e) {
            throw ConfigError(e.what());
        }
        CsvWriter csv({"bin_center", "occurrence"});
        for (std::size_t i = 0; i < res.histogram.bins(); ++i)
            csv.row({res.histogram.center(i), static_cast<double>(res.histogram.occurrences[i])});
        out.write_text("histogram.csv", csv.str());
        Json j;
        j["n_shots"] = spec.n_shots;
        j["bin_width"] = spec.bin_width;
        const int top = res.atoms.empty() ? 0 : *std::max_element(res.atoms.begin(), res.atoms.end());
        std::vector<int> per_n(top + 1, 0);
        for (int a : res.atoms)
            ++per_n[a];
        j["shots_per_atom_number"] = per_n;
        j["seed"] = spec.seed;
        out.write_json("synth_summary.json", j);
        return kExitOk;
    };
}

// ---- fit-histogram --------------------------------------------------------

CountHistogram histogram_from_csv(const CsvTable& t, const std::string& source)
{
    const auto centers = t.column("bin_center");
    const auto occ = t.column("occurrence");
    if (centers.size() < 2)
        throw ConfigError(source + ": need at least two bins");
    const double w = centers[1] - centers[0];
    CountHistogram h;
    for (std::size_t i = 0; i < centers.size(); ++i) {
        if (i > 0 && std::abs(centers[i] - centers[i - 1] - w) > 1e-6 * std::abs(w))
            throw ConfigError(source + ": bin centers must be evenly spaced (row " + std::to_string(i + 1) + ")");
        if (!(occ[i] >= 0) || occ[i] != std::floor(occ[i]))
            throw ConfigError(source + ": occurrences must be non-negative integers (row " + std::to_string(i + 1) + ")");
        h.edges.push_back(centers[i] - 0.5 * w);
        h.occurrences.push_back(static_cast<std::int64_t>(occ[i]));
        h.n_shots += h.occurrences.back();
    }
    h.edges.push_back(centers.back() + 0.5 * w);
    try {
        h.validate();
    }
    catch (const std::invalid_argument& e) {
        throw ConfigError(source + ": " + e.what());
    }
    return h;
}

Executor prepare_fit_histogram(ConfigReader& r, RunManifest& manifest)
{
    const auto path = input_file(r, "histogram_csv", manifest);
    const std::string hash = manifest.input_hashes[path.string()];
    const auto n_max = r.integer("n_max", 3);
    require_config(n_max >= 1, r, "n_max", "must be >= 1");
    const CountHistogram h = histogram_from_csv(read_csv(path), path.string());
    return [=](OutputDir& out, RunManifest&) {
        const CompositeFit f = fit_composite_gaussian(h, static_cast<int>(n_max));
        Json params;
        params["input_sha256"] = hash;
        params["seed"] = nullptr;
        params["n_shots"] = h.n_shots;
        params["n_max"] = n_max;
        params["P_n"] = f.params.occurrences;
        params["I_bg"] = f.params.background;
        params["w_bg"] = f.params.background_width;
        params["I_a"] = f.params.atom_counts;
        params["w"] = f.params.atom_width;
        std::vector<double> err(f.errors.data(), f.errors.data() + f.errors.size());
        params["errors"] = {{"P_n", std::vector<double>(err.begin(), err.begin() + n_max + 1)},
                            {"I_bg", err[n_max + 1]},
                            {"w_bg", err[n_max + 2]},
                            {"I_a", err[n_max + 3]},
                            {"w", err[n_max + 4]}};
        params["initial_I_a"] = f.initial_atom_counts;
        params["model_total"] = f.model_total();
        params["background_fit"] = {{"I_bg", f.background.background},
                                    {"w_bg", f.background.background_width},
                                    {"cut", f.background.cut},
                                    {"P_atom_ge1", f.background.p_atom},
                                    {"P_atom_ge1_error", f.background.p_atom_error},
                                    {"diagnostics", nlls_diagnostics(f.background.fit)}};
        params["diagnostics"] = nlls_diagnostics(f.fit);
        out.write_json("params.json", params);

        Json occ;
        occ["input_sha256"] = hash;
        occ["probabilities"] = f.occupancy.probabilities;
        occ["mean"] = f.occupancy.mean;
        occ["variance"] = f.occupancy.variance;
        occ["fano"] = f.poisson.fano;
        occ["fano_error"] = f.poisson.fano_error;
        occ["sub_poissonian"] = f.poisson.sub_poissonian;
        occ["dispersion_ratio"] = f.poisson.dispersion_ratio;
        occ["poisson_mean"] = f.poisson.mean;
        occ["poisson_log_likelihood"] = f.poisson.log_likelihood;
        out.write_json("occupancy.json", occ);
        if (!f.fit.converged()) {
            std::cerr << "fit-histogram: composite fit did not converge: " << f.fit.message << "\n";
            return kExitComputation;
        }
        return kExitOk;
    };
}

// ---- fit-transport --------------------------------------------------------

Executor prepare_fit_transport(ConfigReader& r, RunManifest& manifest)
{
    const auto path = input_file(r, "counts_csv", manifest);
    const CsvTable table = read_csv(path);
    TransportData data;
    for (double dz : table.column("dz_um"))
        data.displacement.push_back(dz * um);
    data.counts = table.column("counts");
    if (table.has_column("error"))
        data.errors = table.column("error");

    ExponentialModel model;
    if (r.has("model_json")) {
        const auto mp = input_file(r, "model_json", manifest);
        ConfigReader mr(load_json_file(mp), mp.string());
        model.amplitude = mr.number("amplitude");
        model.decay_length = mr.number("decay_length_um") * um;
        mr.finish();
    }
    else if (r.has("profile_csv")) {
        const auto pp = input_file(r, "profile_csv", manifest);
        const CsvTable pt = read_csv(pp);
        std::vector<double> z;
        for (double v : pt.column("z_um"))
            z.push_back(v * um);
        const auto counts = pt.column("counts");
        try {
            model = fit_exponential_counts(z, counts).model;
        }
        catch (const std::invalid_argument& e) {
            throw ConfigError(pp.string() + ": " + e.what());
        }
    }
    else {
        ConfigReader& m = r.object("model");
        model.amplitude = m.number("amplitude");
        model.decay_length = m.number("decay_length_um") * um;
    }
    require_config(model.amplitude > 0 && model.decay_length > 0, r, "model", "needs amplitude > 0 and decay_length_um > 0");

    TransportFitOptions opt;
    opt.trap_wavelength = r.number("trap_wavelength_nm", 935.0) * nm;
    opt.background = r.number("background", 0.0);
    opt.n_configs = static_cast<int>(r.integer("n_configs", 100));
    const long long seed = r.integer("seed", 1);
    require_config(seed >= 0, r, "seed", "must be >= 0");
    opt.seed = static_cast<std::uint64_t>(seed);
    manifest.seed = opt.seed;
    opt.nbar_guess = r.number("nbar_guess", 1.0);
    opt.z_max_guess = r.number("z_max_guess_um", 5.0) * um;
    require_config(opt.n_configs > 0, r, "n_configs", "must be > 0");
    const std::string hash = manifest.input_hashes[path.string()];
    return [=](OutputDir& out, RunManifest&) {
        TransportFitResult f;
        try {
            f = fit_transport_ensemble(data, model, opt);
        }
        catch (const std::invalid_argument& e) {
            throw ConfigError(path.string() + ": " + e.what());
        }
        Json j;
        j["input_sha256"] = hash;
        j["seed"] = opt.seed;
        j["model"] = {{"amplitude", model.amplitude}, {"decay_length_um", model.decay_length / um}};
        j["nbar_lattice"] = f.nbar;
        j["nbar_error"] = f.nbar_error;
        j["z_max_um"] = f.z_max / um;
        j["z_max_error_um"] = f.z_max_error / um;
        j["i_max"] = f.i_max;
        j["residual_norm"] = f.residual_norm;
        j["n_configs"] = opt.n_configs;
        j["diagnostics"] = nlls_diagnostics(f.fit);
        out.write_json("transport_fit.json", j);
        CsvWriter csv({"dz_um", "counts", "ensemble_mean", "ensemble_error", "expectation"});
        for (std::size_t i = 0; i < data.displacement.size(); ++i)
            csv.row({data.displacement[i] / um, data.counts[i], f.ensemble.mean[i], f.ensemble.error_of_mean[i],
                     transport_expectation(model, f.nbar, f.z_max, data.displacement[i], opt.trap_wavelength,
                                           opt.background)});
        out.write_text("transport_model.csv", csv.str());
        if (!f.fit.converged()) {
            std::cerr << "fit-transport: fit did not converge: " << f.fit.message << "\n";
            return kExitComputation;
        }
        return kExitOk;
    };
}

// ---- assemble -------------------------------------------------------------

Json report_json(const AssemblyReport& rep)
{
    Json j;
    j["duration_ms"] = rep.duration / ms;
    j["assembled"] = rep.count(SiteOutcome::Assembled);
    j["lost_in_transport"] = rep.count(SiteOutcome::LostInTransport);
    j["decayed"] = rep.count(SiteOutcome::Decayed);
    j["initially_empty"] = rep.count(SiteOutcome::InitiallyEmpty);
    j["mean_closed_form_survival"] = number_or_null(rep.mean_closed_form_survival());
    j["resonance_violations"] = rep.resonance_violations;
    Json sites = Json::array();
    for (std::size_t i = 0; i < rep.outcomes.size(); ++i) {
        Json s;
        s["tweezer"] = i;
        s["outcome"] = to_string(rep.outcomes[i]);
        s["initial_z_um"] = number_or_null(rep.initial_z[i] / um);
        s["park_time_ms"] = number_or_null(rep.park_time[i] / ms);
        s["park_z_nm"] = number_or_null(rep.park_z[i] / nm);
        s["assembly_time_ms"] = number_or_null((rep.park_time[i] - rep.schedule.segments[i].start) / ms);
        s["hold_detuning_Hz"] = number_or_null(rep.hold_detuning[i]);
        s["closed_form_survival"] = number_or_null(rep.closed_form_survival[i]);
        sites.push_back(s);
    }
    j["sites"] = sites;
    return j;
}

Executor prepare_assemble(ConfigReader& r, RunManifest& manifest)
{
    ConfigReader& p = r.object("plan");
    AssemblyPlan plan;
    if (p.has("tones_MHz")) {
        for (double t : p.numbers("tones_MHz"))
            plan.tones.push_back(t * 1e6);
    }
    else {
        const auto m = p.integer("n_tweezers", 10);
        require_config(m >= 1, p, "n_tweezers", "must be >= 1");
        plan = AssemblyPlan::uniform(static_cast<int>(m), p.number("first_tone_MHz", 80.0) * 1e6,
                                     p.number("tone_spacing_MHz", 10.0) * 1e6);
    }
    plan.axial_frequency = p.number("axial_frequency_kHz", plan.axial_frequency / 1e3) * 1e3;
    plan.resonance_ratio = p.number("resonance_ratio", plan.resonance_ratio);
    plan.transport_budget = p.number("transport_budget_ms", plan.transport_budget / ms) * ms;
    plan.ramp_time = p.number("ramp_ms", plan.ramp_time / ms) * ms;
    plan.switch_time = p.number("switch_time_us", plan.switch_time / us) * us;
    plan.lifetime = p.number("lifetime_ms", plan.lifetime / ms) * ms;
    plan.detection_latency = p.number("detection_latency_us", plan.detection_latency / us) * us;
    plan.probe_drop_threshold = p.number("probe_drop_threshold", plan.probe_drop_threshold);
    plan.max_drop = p.number("max_drop", plan.max_drop);
    plan.evanescent_scale = p.number("evanescent_scale", plan.evanescent_scale);
    plan.trap_wavelength = p.number("trap_wavelength_nm", plan.trap_wavelength / nm) * nm;
    plan.atomic_wavelength = p.number("atomic_wavelength_nm", plan.atomic_wavelength / nm) * nm;
    try {
        plan.validate();
    }
    catch (const std::invalid_argument& e) {
        throw ConfigError(e.what());
    }

    ConfigReader& o = r.object("occupancy");
    const std::string source = o.string("source", "uniform");
    std::optional<OccupancySampler> sampler;
    std::optional<std::vector<std::optional<double>>> fixed;
    if (source == "uniform") {
        const double prob = o.number("probability", 0.7), z = o.number("z_um", 5.0) * um;
        require_config(prob >= 0 && prob <= 1, o, "probability", "must lie in [0, 1]");
        require_config(z > 0, o, "z_um", "must be > 0");
        sampler.emplace(prob, z);
    }
    else if (source == "list") {
        const auto heights = o.nullable_numbers("heights_um");
        require_config(static_cast<int>(heights.size()) == plan.size(), o, "heights_um", "needs one entry per tweezer");
        fixed.emplace();
        for (double h : heights) {
            require_config(std::isnan(h) || h > 0, o, "heights_um", "entries must be > 0 or null");
            fixed->push_back(std::isnan(h) ? std::nullopt : std::optional<double>(h * um));
        }
    }
    else if (source == "loading_report") {
        const auto path = input_file(o, "path", manifest);
        const Json doc = load_json_file(path);
        try {
            LoadingReport rep;
            rep.n_trajectories = doc.at("n_trajectories").get<int>();
            std::vector<TrapSite> sites;
            for (const auto& s : doc.at("sites")) {
                TrapSite site;
                site.index = s.at("index").get<int>();
                site.z = s.at("z_um").get<double>() * um;
                sites.push_back(site);
                for (int k = 0; k < s.at("count").get<int>(); ++k)
                    rep.trajectories.push_back({Outcome::Bound, site.index, site.z});
            }
            while (static_cast<int>(rep.trajectories.size()) < rep.n_trajectories)
                rep.trajectories.push_back({Outcome::Escaped, 0, 0});
            sampler.emplace(rep, sites);
        }
        catch (const Json::exception& e) {
            throw ConfigError(path.string() + ": not a loading report (" + e.what() + ")");
        }
    }
    else {
        throw ConfigError("key '" + o.qualified("source") + "' must be uniform, list or loading_report, got '" + source + "'");
    }
    const long long seed = r.integer("seed", 1);
    require_config(seed >= 0, r, "seed", "must be >= 0");
    manifest.seed = static_cast<unsigned long long>(seed);
    const auto runs = r.integer("n_runs", 1);
    require_config(runs >= 1, r, "n_runs", "must be >= 1");

    return [=](OutputDir& out, RunManifest&) {
        std::vector<AssemblyReport> reports;
        reports.reserve(static_cast<std::size_t>(runs));
        for (long long k = 0; k < runs; ++k) {
            const auto s = static_cast<std::uint64_t>(seed) + static_cast<std::uint64_t>(k);
            reports.push_back(fixed ? simulate_assembly(plan, *fixed, s) : simulate_assembly(plan, *sampler, s));
        }
        const AssemblyReport& first = reports.front();
        Json j = report_json(first);
        j["seed"] = seed;
        j["n_runs"] = runs;
        j["detection_height_nm"] = plan.detection_height() / nm;
        if (runs > 1) {
            const SurvivalSummary sum = survival_summary(reports, plan);
            auto site = [](const SiteSurvival& s) {
                return Json{{"parked", s.parked},
                            {"survived", s.survived},
                            {"mc", s.mc},
                            {"closed_form", s.closed_form},
                            {"sigma", s.sigma},
                            {"z_score", s.z_score()}};
            };
            Json sj;
            sj["pooled"] = site(sum.pooled);
            sj["expected_assembled"] = sum.expected_assembled;
            sj["sites"] = Json::array();
            for (const auto& s : sum.sites)
                sj["sites"].push_back(site(s));
            j["survival"] = sj;
        }
        out.write_json("assembly_report.json", j);
        CsvWriter ev({"t_s", "tweezer", "event"});
        for (const auto& e : first.events)
            ev.row(std::vector<std::string>{format_number(e.t), std::to_string(e.tweezer), to_string(e.kind)});
        out.write_text("events.csv", ev.str());
        CsvWriter sch({"t_s", "nu_b_Hz"});
        for (const auto& [t, nu] : first.schedule.bottom_frequency())
            sch.row({t, nu});
        out.write_text("schedule.csv", sch.str());
        return kExitOk;
    };
}

const std::vector<Command>& commands()
{
    static const std::vector<Command> list{
        {"stack", "Multilayer reflectance/transmittance versus angle", prepare_stack},
        {"field", "Tweezer field line cuts above the stack", prepare_field},
        {"potential", "Trap potential line cuts and site table", prepare_potential},
        {"conveyor", "Conveyor displacement for a detuning profile", prepare_conveyor},
        {"mc-load", "Monte Carlo loading of the tweezer lattice", prepare_mc_load},
        {"imaging", "Photon budget and counts versus defocus", prepare_imaging},
        {"synth-hist", "Synthetic count histogram", prepare_synth},
        {"fit-histogram", "Composite-Gaussian fit of a count histogram", prepare_fit_histogram},
        {"fit-transport", "Transport-ensemble fit of counts versus displacement", prepare_fit_transport},
        {"assemble", "Sequential conveyor assembly simulation", prepare_assemble},
    };
    return list;
}

int run_command(const Command& cmd, const std::string& config_path, const std::vector<std::string>& sets,
                const std::string& out_dir, std::ostream& err)
{
    RunManifest manifest;
    manifest.tool_version = TWEEZERLAB_VERSION;
    manifest.subcommand = cmd.name;
    manifest.started = utc_timestamp();
    Executor exec;
    ConfigReader* reader = nullptr;
    std::optional<ConfigReader> holder;
    try {
        Json config = Json::object();
        if (!config_path.empty()) {
            config = load_json_file(config_path);
            manifest.input_hashes[config_path] = sha256_file(config_path);
            // A manifest replays the run it describes.
            if (config.is_object() && config.contains("manifest_version") && config.contains("config")) {
                if (config.value("subcommand", cmd.name) != cmd.name)
                    throw ConfigError("manifest '" + config_path + "' belongs to subcommand '" +
                                      config.value("subcommand", std::string()) + "'");
                Json inner = config.at("config");
                config = std::move(inner);
            }
        }
        for (const auto& s : sets)
            apply_override(config, s);
        holder.emplace(std::move(config), "");
        reader = &*holder;
        exec = cmd.prepare(*reader, manifest);
        reader->finish();
    }
    catch (const ConfigError& e) {
        err << "tweezerlab " << cmd.name << ": configuration error: " << e.what() << "\n";
        return kExitConfig;
    }
    catch (const std::invalid_argument& e) {
        err << "tweezerlab " << cmd.name << ": configuration error: " << e.what() << "\n";
        return kExitConfig;
    }
    catch (const std::exception& e) {
        err << "tweezerlab " << cmd.name << ": " << e.what() << "\n";
        return kExitComputation;
    }

    try {
        OutputDir out(out_dir);
        const int status = exec(out, manifest);
        manifest.config = reader->resolved();
        manifest.finished = utc_timestamp();
        out.write_manifest(manifest);
        return status;
    }
    catch (const ConfigError& e) {
        err << "tweezerlab " << cmd.name << ": configuration error: " << e.what() << "\n";
        return kExitConfig;
    }
    catch (const std::invalid_argument& e) {
        err << "tweezerlab " << cmd.name << ": configuration error: " << e.what() << "\n";
        return kExitConfig;
    }
    catch (const std::exception& e) {
        err << "tweezerlab " << cmd.name << ": computation failed: " << e.what() << "\n";
        return kExitComputation;
    }
}

}  // namespace

std::vector<std::string> subcommands()
{
    std::vector<std::string> names;
    for (const auto& c : commands())
        names.push_back(c.name);
    return names;
}

int dispatch(int argc, const char* const* argv, std::ostream& out, std::ostream& err)
{
    CLI::App app{"tweezerlab: optical tweezer lattice modelling toolkit"};
    app.set_version_flag("--version", TWEEZERLAB_VERSION);
    app.require_subcommand(1);
    std::string config_path, out_dir;
    std::vector<std::string> sets;
    for (const auto& c : commands()) {
        CLI::App* sub = app.add_subcommand(c.name, c.summary);
        sub->add_option("--config", config_path, "JSON configuration file (or a run manifest to replay)");
        sub->add_option("--set", sets, "Override a config key, e.g. --set mc.n_trajectories=1000")->take_all();
        sub->add_option("--out", out_dir, "Output directory")->required();
    }
    try {
        app.parse(argc, argv);
    }
    catch (const CLI::CallForHelp&) {
        out << app.help();
        return kExitOk;
    }
    catch (const CLI::CallForVersion&) {
        out << TWEEZERLAB_VERSION << "\n";
        return kExitOk;
    }
    catch (const CLI::ParseError& e) {
        if (auto* sub = app.get_subcommands().empty() ? nullptr : app.get_subcommands().front();
            sub && e.get_name() == "CallForHelp")
            out << sub->help();
        err << "tweezerlab: " << e.what() << "\n";
        return kExitConfig;
    }
    for (const auto& c : commands())
        if (app.got_subcommand(c.name))
            return run_command(c, config_path, sets, out_dir, err);
    err << "tweezerlab: no subcommand given\n";
    return kExitConfig;
}

}  // namespace tweezerlab::cli
