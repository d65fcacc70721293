#include <stdio.h>
#include "crpnet.h"

static const char *NET =
    "{\"buffers\":[{\"name\":\"b1\",\"lambda\":1.3,\"holding_cost\":1.0,\"interarrival\":{\"family\":\"exponential\"}},"
    "{\"name\":\"b2\",\"lambda\":0.7,\"holding_cost\":2.0,\"interarrival\":{\"family\":\"exponential\"}}],"
    "\"servers\":[\"s1\",\"s2\"],"
    "\"activities\":[{\"server\":\"s1\",\"buffer\":\"b1\",\"mean_service\":1.0,\"service\":{\"family\":\"exponential\"}},"
    "{\"server\":\"s2\",\"buffer\":\"b1\",\"mean_service\":1.0,\"service\":{\"family\":\"exponential\"}},"
    "{\"server\":\"s2\",\"buffer\":\"b2\",\"mean_service\":1.0,\"service\":{\"family\":\"exponential\"}}]}";

int main(void) {
    CrpNetwork *net = NULL;
    CrpPlan *plan = NULL;
    if (crp_network_from_json(NET, &net) != CRP_STATUS_OK || crp_plan_new(net, &plan) != CRP_STATUS_OK) {
        fprintf(stderr, "%s\n", crp_last_error());
        return 1;
    }
    double x[3];
    double sigma2 = 0.0;
    crp_plan_x_star(plan, x, 3);
    crp_sigma2(plan, &sigma2);
    printf("x* = %.6f %.6f %.6f sigma2 = %.4f\n", x[0], x[1], x[2], sigma2);
    crp_plan_free(plan);
    crp_network_free(net);
    return 0;
}
