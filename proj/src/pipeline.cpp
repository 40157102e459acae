#include "putf/pipeline.hpp"

#include <charconv>
#include <cstdio>

namespace putf {

std::string format_noise_table(const std::vector<NoiseSweepRow>& rows) {
    std::string out = "beta        cd_e-3        hd_e-3        p2f_e-3\n";
    char buf[128];
    for (const auto& row : rows) {
        std::snprintf(buf, sizeof(buf), "%-10.4g  %-12.6g  %-12.6g  %-12.6g\n", row.beta,
                      row.report.cd, row.report.hd, row.report.p2f);
        out += buf;
    }
    return out;
}

}  // namespace putf
