#include <math.h>
#include <stdio.h>

#include "gainloss.h"

int main(void) {
    double depth[2] = {-3.0, -3.0}, gain_loss[2] = {0.0, 0.0};
    double width[2] = {1.0, 1.0}, center[2] = {-1.5, 1.5};
    GlPotential *p = NULL;
    GlSpectrum *s = NULL;
    double re, im;

    if (gl_potential_new(2, depth, gain_loss, width, center, &p) != GL_STATUS_OK) {
        printf("potential: %s\n", gl_last_error());
        return 1;
    }
    if (gl_spectrum_solve(p, -12.0, 12.0, 801, 2, &s) != GL_STATUS_OK) {
        printf("solve: %s\n", gl_last_error());
        return 1;
    }
    gl_spectrum_energy(s, 0, &re, &im);
    if (!(re < -2.0) || fabs(im) > 1e-12) {
        printf("unexpected ground state %g%+gi\n", re, im);
        return 1;
    }
    if (gl_spectrum_energy(s, 9, &re, &im) != GL_STATUS_INVALID_ARGUMENT) {
        return 1;
    }
    gl_spectrum_free(s);
    gl_potential_free(p);
    printf("ok %s\n", gl_version());
    return 0;
}
