#include <benchmark/benchmark.h>

#include "pergola/arm.hpp"
#include "pergola/features.hpp"
#include "pergola/rownav.hpp"
#include "pergola/safety.hpp"
#include "pergola/sim.hpp"

using namespace pergola;

namespace {

const SuiteFrame& sample() {
    static const auto suite = make_row_suite(1, 42, LidarSpec::vlp16());
    return suite.front();
}

void BM_CastScan(benchmark::State& st) {
    const auto& s = sample();
    const auto spec = LidarSpec::vlp16(static_cast<int>(st.range(0)));
    for (auto _ : st) benchmark::DoNotOptimize(cast_scan(s.world, s.robot, spec, 1));
    st.SetItemsProcessed(st.iterations() * 16 * st.range(0));
}
BENCHMARK(BM_CastScan)->Arg(450)->Arg(900)->Unit(benchmark::kMillisecond);

void BM_DetectRow(benchmark::State& st) {
    const auto& s = sample();
    RowDetectParams p;
    p.row_width = s.world.config().row_width;
    for (auto _ : st) benchmark::DoNotOptimize(detect_row(s.cast.frame, p));
}
BENCHMARK(BM_DetectRow)->Unit(benchmark::kMillisecond);

void BM_PlaneSelection(benchmark::State& st) {
    const auto& f = sample().cast.frame;
    for (auto _ : st)
        benchmark::DoNotOptimize(points_mask(select_plane_segmented(f, static_cast<int>(st.range(0)), PlaneMetric::mean).points));
}
BENCHMARK(BM_PlaneSelection)->Arg(1)->Arg(5)->Arg(450)->Unit(benchmark::kMillisecond);

void BM_ScaledDensity(benchmark::State& st) {
    const auto& f = sample().cast.frame;
    const auto m = ScaleModel::for_spec(f.spec);
    for (auto _ : st) benchmark::DoNotOptimize(scaled_density_extract(f, m, 127.0));
}
BENCHMARK(BM_ScaledDensity)->Unit(benchmark::kMillisecond);

void BM_VerticalObjects(benchmark::State& st) {
    const auto& f = sample().cast.frame;
    for (auto _ : st) benchmark::DoNotOptimize(extract_vertical_objects(f, 45.0, 0.45));
}
BENCHMARK(BM_VerticalObjects)->Unit(benchmark::kMillisecond);

void BM_SegmentByRange(benchmark::State& st) {
    const auto f = fill_reflector_ranges(sample().cast.frame);
    for (auto _ : st) benchmark::DoNotOptimize(segment_by_range(f));
}
BENCHMARK(BM_SegmentByRange)->Unit(benchmark::kMillisecond);

void BM_InverseKinematics(benchmark::State& st) {
    const ArmGeometry g;
    const auto p = fk_planar3({0.3, 0.8, 0.47}, g);
    for (auto _ : st) benchmark::DoNotOptimize(ik_planar3(p, 1.57, g));
}
BENCHMARK(BM_InverseKinematics);

void BM_Workspace(benchmark::State& st) {
    WorkspaceGrid grid;
    grid.resolution = 1.0 / static_cast<double>(st.range(0));
    for (auto _ : st) benchmark::DoNotOptimize(build_workspace(ArmGeometry{}, kPi / 2, grid));
}
BENCHMARK(BM_Workspace)->Arg(200)->Arg(1000)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
