#include <stdio.h>
#include "nftrack.h"
// Build: cc -I include examples/smoke.c -L ../../target/release -lnftrack_ffi
int main(void) {
  NftScenario *s = NULL;
  NftStatus st = nft_scenario_from_toml("[array]\nelements = 64\n[region]\nr_min_m = 2.0\nr_max_m = 8.0\n[protocol]\nduration_s = 0.2\n", &s);
  if (st != NFT_STATUS_OK) { printf("err %s\n", nft_last_error()); return 1; }
  NftTrace *t = NULL;
  st = nft_run(s, "genie", 1, 10.0, 0.75, &t);
  double m = 0; nft_trace_mean_gain(t, &m);
  printf("status %d mean %.6f version %s\n", st, m, nft_version());
  nft_trace_free(t); nft_scenario_free(s);
  return 0;
}
