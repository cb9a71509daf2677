// Copyright 2026 the ldplan authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include <doctest.h>

#include <cstdlib>
#include <string>

#include "ldp/common.hpp"
#include "ldp/jsonio.hpp"
#include "ldp/sha256.hpp"

using namespace ldp;

TEST_CASE("sha256 known vectors") {
  CHECK(sha256_hex(std::string("")) ==
        "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855");
  CHECK(sha256_hex(std::string("abc")) ==
        "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
  CHECK(sha256_hex(std::string(
            "abcdbcdecdefdefgefghfghighijhijkijkljklmklmnlmnomnopnopq")) ==
        "248d6a61d20638b8e5c026930c3e6039a33ce45964ff2167f6ecedd419db06c1");
  // Incremental updates match one-shot hashing.
  Sha256 h;
  std::string million(1000000, 'a');
  for (std::size_t i = 0; i < million.size(); i += 4999) {
    h.update(million.data() + i, std::min<std::size_t>(4999, million.size() - i));
  }
  CHECK(h.hex_digest() ==
        "cdc76e5c9914fb9281a1c7e284d73e67f1809a48a497200e046d39ccc7112cd0");
}

TEST_CASE("rng determinism and substreams") {
  Rng a(42), b(42);
  for (int i = 0; i < 100; ++i) CHECK(a.next_u64() == b.next_u64());
  CHECK(derive_seed(1, "stage", 0) != derive_seed(1, "stage", 1));
  CHECK(derive_seed(1, "stage", 0) != derive_seed(2, "stage", 0));
  CHECK(derive_seed(1, "a") != derive_seed(1, "b"));
  CHECK(derive_seed(1, "a", 7) == derive_seed(1, "a", 7));
}

TEST_CASE("rng moments are sane") {
  Rng r(7);
  double sum = 0, sq = 0;
  const int n = 200000;
  for (int i = 0; i < n; ++i) {
    const double x = r.normal();
    sum += x;
    sq += x * x;
  }
  CHECK(std::abs(sum / n) < 0.01);
  CHECK(std::abs(sq / n - 1.0) < 0.02);
}

TEST_CASE("format_double round-trips exactly") {
  Rng r(3);
  for (int i = 0; i < 1000; ++i) {
    const double x = (r.uniform() - 0.5) * std::pow(10.0, r.uniform(-300, 300));
    const std::string s = format_double(x);
    CHECK(std::strtod(s.c_str(), nullptr) == x);
  }
  CHECK_THROWS_AS(format_double(std::numeric_limits<double>::infinity()), NumericError);
}

TEST_CASE("json vec/mat round-trip") {
  Rng r(5);
  Mat m = r.normal_mat(3, 4);
  const Json parsed = Json::parse(json_mat_rows(m));
  Mat back = parse_mat_rows(parsed);
  CHECK((back - m).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("parallel_for writes every slot once") {
  std::vector<int> hits(257, 0);
  parallel_for(257, [&](int i) { hits[static_cast<std::size_t>(i)] += i + 1; });
  for (int i = 0; i < 257; ++i) CHECK(hits[static_cast<std::size_t>(i)] == i + 1);
}
