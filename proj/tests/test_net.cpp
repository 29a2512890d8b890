#include <doctest.h>

#include <cstdio>
#include <map>
#include <string>
#include <vector>

#include "ft/checkpoint.hpp"
#include "ft/gradcheck.hpp"
#include "ft/net.hpp"
#include "ft/ops.hpp"
#include "ft/rng.hpp"

using namespace ft;

namespace {

Tensor random_input(std::uint64_t seed, int channels = 1) {
  Rng rng(seed);
  Tensor t({2, channels, 96, 96});
  for (std::size_t i = 0; i < t.size(); ++i)
    t[i] = static_cast<float>(rng.uniform(-1.0, 1.0));
  return t;
}

// Counting oracle, written straight from the layer dimensions.
std::size_t conv_params(int out_ch, int in_ch, int k) {
  return static_cast<std::size_t>(out_ch) * in_ch * k * k + out_ch;
}
std::size_t fc_params(int out, int in) {
  return static_cast<std::size_t>(out) * in + out;
}

std::size_t deep_trunk_params(int in_ch = 1) {
  return conv_params(24, in_ch, 5) + 4 * conv_params(24, 24, 3) +
         conv_params(32, 24, 3) + conv_params(32, 32, 3) +
         conv_params(48, 32, 3) + 2 * conv_params(48, 48, 3) +
         conv_params(96, 48, 3) + conv_params(128, 96, 3);
}
std::size_t head_params(int fc1_in, int out) {
  return fc_params(1024, fc1_in) + fc_params(1024, 1024) + fc_params(out, 1024);
}

std::shared_ptr<ParamTensor> find_param(NetworkGraph& net,
                                        const std::string& name) {
  for (auto& p : net.parameters())
    if (p->name == name) return p;
  FAIL("missing parameter " << name);
  return nullptr;
}

// Copies every parameter of src whose name starts with src_prefix into the
// dst parameter obtained by swapping the prefix.
void copy_params(NetworkGraph& src, const std::string& src_prefix,
                 NetworkGraph& dst, const std::string& dst_prefix) {
  for (auto& p : src.parameters()) {
    if (p->name.rfind(src_prefix, 0) != 0) continue;
    auto d = find_param(dst, dst_prefix + p->name.substr(src_prefix.size()));
    REQUIRE(d->value.shape() == p->value.shape());
    d->value = p->value;
  }
}

std::map<std::string, std::vector<int>> trace_map(const NetworkGraph& net) {
  std::map<std::string, std::vector<int>> m;
  for (const auto& e : net.layer_trace()) m[e.name] = e.shape;
  return m;
}

}  // namespace

TEST_CASE("every architecture builds and runs a batch forward") {
  Tensor depth = random_input(1);
  Tensor edge = random_input(2);
  for (const auto& [arch, name] : arch_names()) {
    INFO(name);
    auto net = NetworkGraph::build(arch, {.seed = 3});
    CHECK(net.arch_id() == name);
    Tensor y = net.uses_edge() ? net.forward(depth, &edge) : net.forward(depth);
    int out = arch == Arch::SingleDeepFingerOnly ? 15 : 18;
    CHECK(y.shape() == std::vector<int>{2, out});
    CHECK(y.all_finite());
  }
}

TEST_CASE("parameter counts match the counting oracle") {
  auto count = [](Arch a, bool tie = true) {
    return NetworkGraph::build(a, {.seed = 0, .tie_streams = tie})
        .parameter_count();
  };
  const std::size_t deep = deep_trunk_params() + head_params(128 * 6 * 6, 18);
  CHECK(count(Arch::SingleDeep) == deep);
  CHECK(count(Arch::SingleDeepFingerOnly) ==
        deep_trunk_params() + head_params(128 * 6 * 6, 15));

  const std::size_t median =
      conv_params(24, 1, 5) + 3 * conv_params(24, 24, 3) +
      conv_params(32, 24, 3) + conv_params(32, 32, 3) +
      conv_params(48, 32, 3) + conv_params(48, 48, 3) +
      conv_params(96, 48, 3) + head_params(96 * 6 * 6, 18);
  CHECK(count(Arch::SingleMedian) == median);

  const std::size_t shallow =
      conv_params(24, 1, 5) + 3 * conv_params(24, 24, 3) +
      conv_params(32, 24, 3) + conv_params(32, 32, 3) +
      conv_params(48, 32, 3) + conv_params(48, 48, 3) +
      head_params(48 * 6 * 6, 18);
  CHECK(count(Arch::SingleShallow) == shallow);

  CHECK(count(Arch::FusionEnhance) == deep);
  CHECK(count(Arch::FusionEarly) == deep_trunk_params(2) - deep_trunk_params() +
                                        deep);  // only c1 widens

  const std::size_t slow_c1c5 =
      conv_params(24, 1, 5) + 4 * conv_params(24, 24, 3);
  const std::size_t slow_tail =
      conv_params(32, 48, 3) + conv_params(32, 32, 3) + conv_params(48, 32, 3) +
      2 * conv_params(48, 48, 3) + conv_params(96, 48, 3) +
      conv_params(128, 96, 3);
  const std::size_t slow_tied =
      slow_c1c5 + slow_tail + head_params(128 * 6 * 6, 18);
  CHECK(count(Arch::FusionSlow) == slow_tied);
  CHECK(count(Arch::FusionSlow, false) == slow_tied + slow_c1c5);

  const std::size_t late_tied =
      deep_trunk_params() + head_params(2 * 128 * 6 * 6, 18);
  CHECK(count(Arch::FusionLate) == late_tied);
  CHECK(count(Arch::FusionLate, false) == late_tied + deep_trunk_params());

  CHECK(count(Arch::FusionResult) == 2 * deep);
}

TEST_CASE("deep trace has the expected stage shapes") {
  auto net = NetworkGraph::build(Arch::SingleDeep, {});
  auto m = trace_map(net);
  CHECK(m.at("depth") == std::vector<int>{1, 96, 96});
  CHECK(m.at("c1") == std::vector<int>{24, 96, 96});
  CHECK(m.at("c5") == std::vector<int>{24, 48, 48});
  CHECK(m.at("c6") == std::vector<int>{32, 24, 24});
  CHECK(m.at("c10") == std::vector<int>{48, 24, 24});
  CHECK(m.at("c11") == std::vector<int>{96, 12, 12});
  CHECK(m.at("c12") == std::vector<int>{128, 12, 12});
  CHECK(m.at("flatten") == std::vector<int>{4608});
  CHECK(m.at("fc1") == std::vector<int>{1024});
  CHECK(m.at("fc3") == std::vector<int>{18});
}

TEST_CASE("shallow trace halves resolution at the strided conv") {
  auto m = trace_map(NetworkGraph::build(Arch::SingleShallow, {}));
  CHECK(m.at("c7") == std::vector<int>{32, 24, 24});
  CHECK(m.at("c8") == std::vector<int>{48, 12, 12});
  CHECK(m.at("c9") == std::vector<int>{48, 12, 12});
  CHECK(m.at("flatten") == std::vector<int>{1728});
  CHECK(m.count("c11") == 0);
}

TEST_CASE("slow fusion merges two 24-channel trunks before c6") {
  auto m = trace_map(NetworkGraph::build(Arch::FusionSlow, {}));
  CHECK(m.at("concat") == std::vector<int>{48, 24, 24});
  CHECK(m.at("c6") == std::vector<int>{32, 24, 24});
  auto late = trace_map(NetworkGraph::build(Arch::FusionLate, {}));
  CHECK(late.at("concat") == std::vector<int>{9216});
}

TEST_CASE("result fusion equals the mean of its two streams") {
  auto fused = NetworkGraph::build(Arch::FusionResult, {.seed = 7});
  auto a = NetworkGraph::build(Arch::SingleDeep, {.seed = 0});
  auto b = NetworkGraph::build(Arch::SingleDeep, {.seed = 0});
  copy_params(fused, "depth.", a, "");
  copy_params(fused, "edge.", b, "");
  Tensor depth = random_input(10), edge = random_input(11);
  Tensor yf = fused.forward(depth, &edge);
  Tensor ya = a.forward(depth);
  Tensor yb = b.forward(edge);
  for (std::size_t i = 0; i < yf.size(); ++i)
    CHECK(yf[i] == 0.5f * ya[i] + 0.5f * yb[i]);  // exact
}

TEST_CASE("enhance fusion equals the deep net on the blended input") {
  auto fused = NetworkGraph::build(Arch::FusionEnhance, {.seed = 8});
  auto deep = NetworkGraph::build(Arch::SingleDeep, {.seed = 0});
  copy_params(fused, "", deep, "");
  Tensor depth = random_input(20), edge = random_input(21);
  Tensor yf = fused.forward(depth, &edge);
  Tensor yd = deep.forward(blend(depth, edge, 0.8f, 0.2f));
  CHECK(yf == yd);  // bitwise
}

TEST_CASE("zero input flows to the output bias") {
  auto net = NetworkGraph::build(Arch::SingleShallow, {.seed = 4});
  auto fc3b = find_param(net, "fc3.b");
  for (int i = 0; i < 18; ++i) fc3b->value[static_cast<std::size_t>(i)] = 0.5f + i;
  Tensor y = net.forward(Tensor({2, 1, 96, 96}));
  for (int r = 0; r < 2; ++r)
    for (int i = 0; i < 18; ++i) CHECK(y.at(r, i) == 0.5f + i);
}

TEST_CASE("tied trunk gradients are the sum over both streams") {
  auto tied = NetworkGraph::build(Arch::FusionLate, {.seed = 5, .tie_streams = true});
  auto untied =
      NetworkGraph::build(Arch::FusionLate, {.seed = 6, .tie_streams = false});
  copy_params(tied, "", untied, "");        // depth stream + head
  copy_params(tied, "c", untied, "edge.c"); // mirror trunk into the edge stream
  CHECK(find_param(tied, "c1.w")->tie_group == "trunk");

  Tensor depth = random_input(30), edge = random_input(31);
  Tensor yt = tied.forward(depth, &edge);
  Tensor yu = untied.forward(depth, &edge);
  CHECK(yt == yu);  // identical weights, identical graph

  Tensor g({2, 18});
  Rng rng(32);
  for (std::size_t i = 0; i < g.size(); ++i)
    g[i] = static_cast<float>(rng.uniform(-1.0, 1.0));
  tied.zero_grads();
  untied.zero_grads();
  tied.backward(g);
  untied.backward(g);
  for (const char* name : {"c1.w", "c1.b", "c5.w", "c12.w"}) {
    auto gt = find_param(tied, name)->grad;
    auto gd = find_param(untied, name)->grad;
    auto ge = find_param(untied, std::string("edge.") + name)->grad;
    REQUIRE(gt.size() == gd.size());
    for (std::size_t i = 0; i < gt.size(); ++i) {
      float want = gd[i] + ge[i];
      CHECK(std::abs(gt[i] - want) <=
            1e-4f * std::max({1.f, std::abs(gt[i]), std::abs(want)}));
    }
  }
}

TEST_CASE("slow fusion is sensitive to which stream gets which input") {
  auto net = NetworkGraph::build(Arch::FusionSlow, {.seed = 9});
  Tensor depth = random_input(40), edge = random_input(41);
  Tensor ab = net.forward(depth, &edge);
  Tensor ba = net.forward(edge, &depth);
  bool differs = false;
  for (std::size_t i = 0; i < ab.size(); ++i)
    if (ab[i] != ba[i]) differs = true;
  CHECK(differs);
}

TEST_CASE("zero upstream gradient leaves all parameter gradients zero") {
  auto net = NetworkGraph::build(Arch::SingleShallow, {.seed = 2});
  net.forward(random_input(50));
  net.zero_grads();
  net.backward(Tensor({2, 18}));
  for (const auto& p : net.parameters())
    for (std::size_t i = 0; i < p->grad.size(); ++i) CHECK(p->grad[i] == 0.f);
}

TEST_CASE("usage errors carry diagnostics") {
  auto net = NetworkGraph::build(Arch::SingleShallow, {});
  CHECK_THROWS_AS(net.backward(Tensor({2, 18})), std::logic_error);
  auto fused = NetworkGraph::build(Arch::FusionLate, {});
  Tensor depth = random_input(60);
  CHECK_THROWS_WITH_AS(fused.forward(depth), doctest::Contains("edge"),
                       std::invalid_argument);
  CHECK_THROWS_AS(net.forward(Tensor({1, 1, 64, 64})), std::invalid_argument);
  CHECK_THROWS_WITH_AS(arch_from_string("resnet"),
                       doctest::Contains("single-deep"), std::invalid_argument);
}

TEST_CASE("checkpoint round-trip is bitwise and rebuilds the graph") {
  auto net = NetworkGraph::build(Arch::FusionSlow, {.seed = 12});
  Checkpoint c = Checkpoint::from_network(net, 42, 12, 0xabcdef);
  const std::string path = "/tmp/ftnet-test-ckpt.ftck";
  save_checkpoint(path, c);
  Checkpoint back = load_checkpoint(path);
  CHECK(back == c);

  auto rebuilt = back.to_network();
  Tensor depth = random_input(70), edge = random_input(71);
  CHECK(rebuilt.forward(depth, &edge) == net.forward(depth, &edge));
  std::remove(path.c_str());
}

TEST_CASE("network-level gradients agree with finite differences") {
  CHECK(grad_check_network(1) < 1e-4);
}
