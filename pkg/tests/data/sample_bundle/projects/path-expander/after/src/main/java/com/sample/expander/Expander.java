package com.sample.expander;

import java.io.File;
import java.io.IOException;

/**
 * Expands archive entries below a target directory.
 */
public class Expander {

    private boolean overwrite = true;

    public Expander() {
    }

    public Expander(boolean overwrite) {
        this.overwrite = overwrite;
    }

    public File expand(String entryName, File targetDirectory) throws IOException {
        File outputFile = new File(targetDirectory, entryName);
        if (!outputFile.getCanonicalPath().startsWith(targetDirectory.getCanonicalPath())) {
            throw new IOException("expanding " + entryName
                    + " would create file outside of " + targetDirectory);
        }
        if (outputFile.exists() && !overwrite) {
            throw new IOException("refusing to overwrite " + outputFile);
        }
        return outputFile;
    }

    public boolean isOverwrite() {
        return overwrite;
    }

    public void setOverwrite(boolean overwrite) {
        this.overwrite = overwrite;
    }
}
