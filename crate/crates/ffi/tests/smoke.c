#include <math.h>
#include <stdio.h>
#include <string.h>

#include "lowimpact.h"

int main(void) {
    LiScenario *s = NULL;
    if (li_scenario_load("stock-advisor", &s) != LI_STATUS_OK) {
        fprintf(stderr, "load: %s\n", li_last_error());
        return 1;
    }
    double p = 0.0;
    if (li_announcement_probability(s, "rich", &p) != LI_STATUS_OK || p != 0.001) {
        return 2;
    }
    char *csv = NULL;
    if (li_run(s, NULL, NULL, NAN, false, &csv) != LI_STATUS_OK) {
        fprintf(stderr, "run: %s\n", li_last_error());
        return 3;
    }
    if (strncmp(csv, "mu,policy_id", 12) != 0) {
        return 4;
    }
    li_string_free(csv);
    if (li_run(s, "nope", NULL, 1.0, false, &csv) != LI_STATUS_USAGE || strlen(li_last_error()) == 0) {
        return 5;
    }
    li_scenario_free(s);
    puts("ok");
    return 0;
}
